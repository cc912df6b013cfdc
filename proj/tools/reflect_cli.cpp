#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

#include "reflect/frame_store.hpp"
#include "reflect/parallel.hpp"
#include "reflect/pipeline.hpp"
#include "reflect/service.hpp"

using namespace reflect;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool verbose = false;

void log(const std::string& msg) {
    if (verbose) std::cerr << msg << '\n';
}

int report_error(const std::string& stage, const std::string& code, const std::string& message, int status = 1) {
    std::cerr << json{{"stage", stage}, {"code", code}, {"message", message}}.dump() << '\n';
    return status;
}

fs::path output_dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

ProgressFn logger(const std::string& stage) {
    return [stage](int done, int total) { log(stage + " " + std::to_string(done) + "/" + std::to_string(total)); };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video reflection separation pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    unsigned threads = 1;
    app.add_option("--config", config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
    app.add_option("--threads", threads, "worker threads (0 = all cores)");
    app.add_flag("--verbose", verbose, "progress on stderr");

    std::string input, tracks_in, out;
    auto* track = app.add_subcommand("track", "detect and track features");
    track->add_option("input", input, "frame directory or glob")->required();
    track->add_option("out", out, "output tracks.json")->required();

    std::string scribbles_path, mask_path, gt_dir;
    int mask_frame = 0;
    bool kmeans = false;
    auto* label = app.add_subcommand("label", "label tracks as background or reflection");
    label->add_option("input", input, "frame directory or glob")->required();
    label->add_option("tracks", tracks_in, "tracks.json")->required();
    label->add_option("out", out, "output labeled tracks.json")->required();
    auto* o_scr = label->add_option("--scribbles", scribbles_path, "scribble JSON");
    auto* o_mask = label->add_option("--mask", mask_path, "scribble mask PNG (1 = background, 2 = reflection)");
    label->add_option("--frame", mask_frame, "frame index the mask was drawn on");
    auto* o_auto = label->add_option("--auto-seed", gt_dir, "synthetic bundle whose ground truth draws the scribbles");
    auto* o_km = label->add_flag("--kmeans", kmeans, "unassisted two-cluster labeling on track velocity");
    o_scr->excludes(o_mask)->excludes(o_auto)->excludes(o_km);
    o_mask->excludes(o_auto)->excludes(o_km);
    o_auto->excludes(o_km);

    auto* separate = app.add_subcommand("separate", "estimate background and reflection layers");
    separate->add_option("input", input, "frame directory or glob")->required();
    separate->add_option("tracks", tracks_in, "labeled tracks.json")->required();
    separate->add_option("out", out, "output directory")->required();

    auto* synth = app.add_subcommand("synth", "generate a synthetic ground-truth bundle");
    synth->add_option("out", out, "output directory")->required();

    std::string result_dir;
    auto* eval = app.add_subcommand("eval", "score a separation against ground truth");
    eval->add_option("result", result_dir, "separation output directory")->required();
    eval->add_option("gt", gt_dir, "synthetic bundle directory")->required();
    eval->add_option("out", out, "output ssim.csv")->required();

    std::string host = "127.0.0.1", work_dir = "reflect-sessions";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "run the annotation HTTP service");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "port (0 picks a free one)");
    serve->add_option("--work-dir", work_dir, "where separation outputs are written");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", "usage", e.what(), 2);
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        set_thread_count(threads);
        const PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
        cfg.validate();

        if (*track) {
            const FrameSequence seq = load_sequence(input);
            const TrackSet ts = run_track(seq, cfg);
            save_tracks(ts, out);
            write_config(cfg, output_dir_of(out));
            log("tracks: " + std::to_string(ts.tracks.size()));
        } else if (*label) {
            if (!kmeans && scribbles_path.empty() && mask_path.empty() && gt_dir.empty())
                return report_error(stage, "usage", "label needs --scribbles, --mask, --auto-seed or --kmeans", 2);
            const FrameSequence seq = load_sequence(input);
            const TrackSet ts = load_tracks(tracks_in);
            TrackSet labeled;
            if (kmeans) {
                KMeansLabeling k = kmeans_fallback(ts);
                for (const std::string& w : k.warnings) std::cerr << json{{"stage", stage}, {"warning", w}}.dump() << '\n';
                labeled = std::move(k.tracks);
            } else {
                std::optional<ScribbleSet> scribbles;
                if (!scribbles_path.empty())
                    scribbles = load_scribbles(scribbles_path);
                else if (!mask_path.empty())
                    scribbles = scribbles_from_mask(read_png_indices(mask_path), mask_frame);
                else
                    scribbles = auto_seed_scribbles(load_bundle(gt_dir), cfg.auto_seed_frame, cfg.auto_seed_radius);
                scribbles->validate(seq.width(), seq.height());
                labeled = run_label(ts, seq, *scribbles, cfg);
            }
            save_tracks(labeled, out);
            write_config(cfg, output_dir_of(out));
        } else if (*separate) {
            const FrameSequence seq = load_sequence(input);
            const TrackSet ts = load_tracks(tracks_in);
            SeparationProgress progress;
            if (verbose)
                progress.report = [](const std::string& s, int done, int total) { logger(s)(done, total); };
            const SeparationResult r = run_separate(seq, ts, cfg, progress);
            write_separation(r, cfg, out);
            for (const WarpSet::Fallback& f : r.warps.fallbacks)
                log("warp fallback: window " + std::to_string(f.window) + " frame " + std::to_string(f.frame) +
                    " " + to_string(f.layer) + " (" + f.reason + ")");
        } else if (*synth) {
            const GroundTruthBundle b = make_desk_bundle(cfg.synth);
            save_bundle(b, out);
            write_config(cfg, out);
        } else if (*eval) {
            const GroundTruthBundle gt = load_bundle(gt_dir);
            const FrameSequence bg = load_sequence((fs::path(result_dir) / "background").string());
            const FrameSequence rf = load_sequence((fs::path(result_dir) / "reflection").string());
            const EvalSummary s = evaluate(bg, rf, gt);
            write_text(out, ssim_csv(s));
            write_text(output_dir_of(out) / "ssim_unscaled.csv", ssim_unscaled_csv(s));
            write_config(cfg, output_dir_of(out));
            std::cout << json{{"mean_ssim_b", s.mean_b},
                              {"mean_ssim_r", s.mean_r},
                              {"mean_ssim_input_baseline", s.mean_baseline},
                              {"background_wins", s.background_wins},
                              {"frames", s.frames.size()}}
                             .dump()
                      << '\n';
        } else if (*serve) {
            AnnotationService service({cfg, work_dir, host});
            const int bound = service.bind(port);
            std::cerr << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << '\n';
            service.run();
        }
    } catch (const Error& e) {
        return report_error(stage, e.code(), e.what());
    } catch (const std::exception& e) {
        return report_error(stage, "internal-error", e.what());
    }
    return 0;
}
