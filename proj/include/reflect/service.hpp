#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "reflect/pipeline.hpp"

namespace reflect {

struct ServiceOptions {
    PipelineConfig config;
    std::filesystem::path work_dir = "reflect-sessions";  // separation outputs go to <work_dir>/<session id>
    std::string host = "127.0.0.1";
};

/// Local HTTP/JSON service for interactive annotation sessions.
///
///   POST /sessions                          {"input_dir": "...", "tracks": "optional tracks.json"}
///   GET  /sessions/:id
///   GET  /sessions/:id/frames/:n            PNG
///   GET  /sessions/:id/tracks/:n            positions and labels of tracks alive at frame n
///   POST /sessions/:id/scribbles            ScribbleSet JSON, returns the seed count
///   POST /sessions/:id/propagate            labels for every track
///   POST /sessions/:id/separate             202, or 409 while a job runs
///   GET  /sessions/:id/status               job state
///   GET  /sessions/:id/results/:layer/:n    PNG of background, reflection or layer_map
class AnnotationService {
public:
    explicit AnnotationService(ServiceOptions options);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    /// Binds the listening socket; port 0 picks a free port. Returns the bound port.
    int bind(int port = 0);
    /// Serves until stop(). Requires bind().
    void run();
    /// run() on a background thread.
    void start();
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace reflect
