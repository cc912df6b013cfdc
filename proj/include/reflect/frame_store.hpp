#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reflect/image.hpp"

namespace reflect {

/// Loads every PNG matched by `path_pattern` (a glob, or a directory meaning
/// "<dir>/*.png"), ordered by the last run of digits in the file stem.
/// 8-bit samples map to v/255, 16-bit to v/65535. Alpha is dropped.
FrameSequence load_sequence(const std::string& path_pattern);

/// Writes `<dir>/<prefix>_%04d.png`, one 8-bit PNG per frame. Returns the paths in order.
std::vector<std::filesystem::path> save_sequence(const FrameSequence& seq, const std::filesystem::path& dir,
                                                 const std::string& prefix = "frame");

/// ITU-R BT.601 luma; identity for single-channel input.
Frame to_luma(const Frame& frame);
FrameSequence to_luma(const FrameSequence& seq);

Frame read_png(const std::filesystem::path& path);
void write_png(const Frame& frame, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Frame& frame);

/// Raw sample values of an 8-bit single-channel or paletted PNG (palette
/// indices are returned unexpanded). Used for label masks.
Grid<std::uint8_t> read_png_indices(const std::filesystem::path& path);

/// Paletted PNG with index 0 = none (black), 1 = background (blue), 2 = reflection (red).
void write_label_png(const Grid<std::uint8_t>& labels, const std::filesystem::path& path);

/// Writes a 0/1 mask as an 8-bit gray PNG (0 / 255).
void write_mask_png(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

}  // namespace reflect
