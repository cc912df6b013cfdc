#include "reflect/service.hpp"

#include <httplib.h>

#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "reflect/frame_store.hpp"

namespace reflect {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct HttpError {
    int status;
    std::string code;
    std::string message;
};

[[noreturn]] void http_fail(int status, std::string code, std::string message) {
    throw HttpError{status, std::move(code), std::move(message)};
}

struct Job {
    std::string state = "idle";  // idle | running | done | failed
    std::string stage;
    double progress = 0.0;
    std::string error_code, error_message;
    fs::path output;
};

struct Session {
    std::string id;
    fs::path input_dir;
    FrameSequence seq;
    TrackSet tracks;
    std::optional<TrackSet> labeled;
    std::optional<ScribbleSet> scribbles;

    std::mutex mu;  // guards everything above and below
    Job job;
    std::optional<LayerDecomposition> result;
    std::thread worker;

    Session(std::string id_, fs::path dir, FrameSequence s, TrackSet t)
        : id(std::move(id_)), input_dir(std::move(dir)), seq(std::move(s)), tracks(std::move(t)) {}
};

json job_json(const Job& j) {
    json out{{"state", j.state}, {"stage", j.stage}, {"progress", j.progress}};
    if (j.state == "done")
        out["result"] = {{"background", (j.output / "background").string()},
                         {"reflection", (j.output / "reflection").string()},
                         {"layer_map", (j.output / "layer_map").string()}};
    if (j.state == "failed") out["error"] = {{"code", j.error_code}, {"message", j.error_message}};
    return out;
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        http_fail(422, "schema-violation", std::string("request body is not JSON: ") + e.what());
    }
}

int status_for(const std::string& code) {
    if (code == "job-running") return 409;
    if (code == "unknown-session" || code == "unknown-frame") return 404;
    return 422;
}

std::string new_token() {
    std::random_device rd;
    std::uniform_int_distribution<int> hex(0, 15);
    std::string s;
    for (int i = 0; i < 16; ++i) s += "0123456789abcdef"[hex(rd)];
    return s;
}

}  // namespace

struct AnnotationService::Impl {
    ServiceOptions opt;
    httplib::Server server;
    std::mutex mu;  // guards `sessions`
    std::map<std::string, std::shared_ptr<Session>> sessions;
    std::thread listener;
    int bound_port = -1;

    explicit Impl(ServiceOptions o) : opt(std::move(o)) { routes(); }

    ~Impl() {
        server.stop();
        if (listener.joinable()) listener.join();
        std::map<std::string, std::shared_ptr<Session>> all;
        {
            std::lock_guard lock(mu);
            all = sessions;
        }
        for (auto& [id, s] : all)
            if (s->worker.joinable()) s->worker.join();
    }

    std::shared_ptr<Session> session(const std::string& id) {
        std::lock_guard lock(mu);
        auto it = sessions.find(id);
        if (it == sessions.end()) http_fail(404, "unknown-session", "no session " + id);
        return it->second;
    }

    static int frame_index(const Session& s, const std::string& text) {
        const long n = std::stol(text);
        if (n < 0 || n >= s.seq.size()) http_fail(404, "unknown-frame", "frame " + text + " is out of range");
        return int(n);
    }

    // Runs `fn`, translating errors into JSON responses.
    template <class Fn>
    httplib::Server::Handler handler(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            auto error = [&](int status, const std::string& code, const std::string& message) {
                res.status = status;
                res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
            };
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                error(e.status, e.code, e.message);
            } catch (const Error& e) {
                error(status_for(e.code()), e.code(), e.what());
            } catch (const std::exception& e) {
                error(500, "internal-error", e.what());
            }
        };
    }

    static void reply(httplib::Response& res, const json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void routes() {
        server.Post("/sessions", handler([this](const httplib::Request& req, httplib::Response& res) {
                        const json body = parse_body(req);
                        if (!body.is_object() || !body.contains("input_dir") || !body["input_dir"].is_string())
                            http_fail(422, "schema-violation", "field input_dir: required string");
                        const fs::path dir = body["input_dir"].get<std::string>();
                        FrameSequence seq = load_sequence(dir.string());
                        TrackSet tracks;
                        if (body.contains("tracks")) {
                            if (!body["tracks"].is_string())
                                http_fail(422, "schema-violation", "field tracks: must be a path string");
                            tracks = load_tracks(body["tracks"].get<std::string>());
                            if (tracks.frame_count != seq.size())
                                http_fail(422, "dimension-mismatch", "tracks and frames differ in length");
                        } else {
                            tracks = run_track(seq, opt.config);
                        }
                        auto s = std::make_shared<Session>(new_token(), dir, std::move(seq), std::move(tracks));
                        const json info = session_info(*s);
                        {
                            std::lock_guard lock(mu);
                            sessions[s->id] = s;
                        }
                        reply(res, info, 201);
                    }));

        server.Get(R"(/sessions/(\w+))", handler([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req.matches[1]);
                       std::lock_guard lock(s->mu);
                       reply(res, session_info(*s));
                   }));

        server.Get(R"(/sessions/(\w+)/frames/(\d+))",
                   handler([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req.matches[1]);
                       std::lock_guard lock(s->mu);
                       const auto png = encode_png(s->seq[frame_index(*s, req.matches[2])]);
                       res.set_content(std::string(png.begin(), png.end()), "image/png");
                   }));

        server.Get(R"(/sessions/(\w+)/tracks/(\d+))",
                   handler([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req.matches[1]);
                       std::lock_guard lock(s->mu);
                       const int n = frame_index(*s, req.matches[2]);
                       const TrackSet& ts = s->labeled ? *s->labeled : s->tracks;
                       json tracks = json::array();
                       for (const Track& t : ts.tracks)
                           if (t.alive_at(n))
                               tracks.push_back(
                                   {{"id", t.id}, {"x", t.at(n).x}, {"y", t.at(n).y}, {"label", to_string(t.label)}});
                       reply(res, {{"frame", n}, {"tracks", tracks}});
                   }));

        server.Post(R"(/sessions/(\w+)/scribbles)",
                    handler([this](const httplib::Request& req, httplib::Response& res) {
                        auto s = session(req.matches[1]);
                        ScribbleSet incoming = scribbles_from_json(parse_body(req));
                        std::lock_guard lock(s->mu);
                        incoming.validate(s->seq.width(), s->seq.height());
                        require(incoming.frame_index < s->seq.size(), "invalid-scribbles",
                                "field frame_index: outside the sequence");
                        ScribbleSet merged = incoming;
                        if (s->scribbles && s->scribbles->frame_index == incoming.frame_index &&
                            req.get_param_value("replace") != "true") {
                            merged = *s->scribbles;
                            merged.strokes.insert(merged.strokes.end(), incoming.strokes.begin(),
                                                  incoming.strokes.end());
                        }
                        const auto seeds = apply_scribbles(s->tracks, merged);
                        s->scribbles = std::move(merged);
                        reply(res, {{"frame_index", s->scribbles->frame_index},
                                    {"stroke_count", s->scribbles->strokes.size()},
                                    {"seed_count", seeds.size()}});
                    }));

        server.Post(R"(/sessions/(\w+)/propagate)",
                    handler([this](const httplib::Request& req, httplib::Response& res) {
                        auto s = session(req.matches[1]);
                        std::lock_guard lock(s->mu);
                        if (!s->scribbles) http_fail(422, "missing-label-seeds", "no scribbles have been posted");
                        TrackSet labeled = run_label(s->tracks, s->seq, *s->scribbles, opt.config);
                        json labels = json::array();
                        for (const Track& t : labeled.tracks)
                            labels.push_back({{"id", t.id}, {"label", to_string(t.label)}});
                        s->labeled = std::move(labeled);
                        reply(res, {{"labels", labels}, {"tracks", to_json(*s->labeled)}});
                    }));

        server.Post(R"(/sessions/(\w+)/separate)",
                    handler([this](const httplib::Request& req, httplib::Response& res) {
                        auto s = session(req.matches[1]);
                        std::lock_guard lock(s->mu);
                        if (s->job.state == "running")
                            http_fail(409, "job-running", "a separation job is already running");
                        if (!s->labeled) http_fail(422, "unlabeled-tracks", "propagate labels before separating");
                        if (s->worker.joinable()) s->worker.join();
                        s->job = Job{"running", "motion", 0.0, "", "", opt.work_dir / s->id};
                        s->result.reset();
                        s->worker = std::thread(&Impl::separate, this, s, s->seq, *s->labeled);
                        reply(res, job_json(s->job), 202);
                    }));

        server.Get(R"(/sessions/(\w+)/status)", handler([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req.matches[1]);
                       std::lock_guard lock(s->mu);
                       reply(res, job_json(s->job));
                   }));

        server.Get(R"(/sessions/(\w+)/results/(background|reflection|layer_map)/(\d+))",
                   handler([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req.matches[1]);
                       std::lock_guard lock(s->mu);
                       if (!s->result) http_fail(404, "no-result", "no finished separation for this session");
                       const int n = frame_index(*s, req.matches[3]);
                       const std::string layer = req.matches[2];
                       Frame f;
                       if (layer == "layer_map") {
                           const Mask& m = s->result->layer_map[n];
                           f = Frame(m.width, m.height, 1);
                           for (std::size_t i = 0; i < m.size(); ++i) f.data[i] = m.data[i] ? 1.0 : 0.0;
                       } else {
                           f = layer == "background" ? s->result->background[n] : s->result->reflection[n];
                       }
                       const auto png = encode_png(f);
                       res.set_content(std::string(png.begin(), png.end()), "image/png");
                   }));
    }

    json session_info(const Session& s) const {
        return {{"id", s.id},
                {"input_dir", s.input_dir.string()},
                {"frame_count", s.seq.size()},
                {"width", s.seq.width()},
                {"height", s.seq.height()},
                {"channels", s.seq.channels()},
                {"track_count", s.tracks.tracks.size()},
                {"labeled", s.labeled.has_value()}};
    }

    void separate(std::shared_ptr<Session> s, FrameSequence seq, TrackSet labeled) {
        const fs::path out = opt.work_dir / s->id;
        try {
            SeparationProgress progress{[&](const std::string& stage, int done, int total) {
                std::lock_guard lock(s->mu);
                const double f = total > 0 ? double(done) / total : 1.0;
                if (s->job.stage != stage) {
                    s->job.stage = stage;
                    s->job.progress = f;
                } else {
                    s->job.progress = std::max(s->job.progress, f);
                }
            }};
            SeparationResult r = run_separate(seq, labeled, opt.config, progress);
            write_separation(r, opt.config, out);
            std::lock_guard lock(s->mu);
            s->result = std::move(r.optimized.layers);
            s->job.state = "done";
            s->job.progress = 1.0;
        } catch (const Error& e) {
            std::lock_guard lock(s->mu);
            s->job.state = "failed";
            s->job.error_code = e.code();
            s->job.error_message = e.what();
        } catch (const std::exception& e) {
            std::lock_guard lock(s->mu);
            s->job.state = "failed";
            s->job.error_code = "internal-error";
            s->job.error_message = e.what();
        }
    }
};

AnnotationService::AnnotationService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

AnnotationService::~AnnotationService() = default;

int AnnotationService::bind(int port) {
    if (port == 0)
        impl_->bound_port = impl_->server.bind_to_any_port(impl_->opt.host);
    else
        impl_->bound_port = impl_->server.bind_to_port(impl_->opt.host, port) ? port : -1;
    require(impl_->bound_port > 0, "io-failure", "cannot bind " + impl_->opt.host + ":" + std::to_string(port));
    return impl_->bound_port;
}

void AnnotationService::run() {
    require(impl_->bound_port > 0, "io-failure", "bind() must precede run()");
    impl_->server.listen_after_bind();
}

void AnnotationService::start() {
    require(impl_->bound_port > 0, "io-failure", "bind() must precede start()");
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void AnnotationService::stop() { impl_->server.stop(); }

int AnnotationService::port() const { return impl_->bound_port; }

}  // namespace reflect
