#ifndef CONEBOOT_REVIEW_SERVER_HPP
#define CONEBOOT_REVIEW_SERVER_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "coneboot/error.hpp"
#include "coneboot/review.hpp"
#include "coneboot/sequence_io.hpp"

namespace coneboot::review {

struct ServerConfig {
    fs::path dataset_root;
    std::string mask_algorithm = "hull"; // serves mask_<algorithm>.png
    std::optional<fs::path> ui_dir;      // static files mounted at /
    std::string reviewer = "reviewer";
};

inline constexpr const char* verdict_log_name = "verdicts.log";

/// HTTP front end for triage. All queue and log access goes through one
/// mutex, so appends are serialized while reads may arrive concurrently.
class ReviewServer {
public:
    ReviewServer(ServerConfig cfg, DatasetManifest manifest)
        : cfg_(std::move(cfg)), manifest_(std::move(manifest)), log_(cfg_.dataset_root / verdict_log_name) {
        auto built = build_queue(manifest_, log_.entries());
        for (const auto& id : built.skipped_unknown) {
            spdlog::warn("verdict log references unknown sequence '{}'; skipped", id);
        }
        queue_ = std::move(built.queue);
        routes();
    }

    ~ReviewServer() { stop(); }

    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        const int bound = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
        require(bound > 0, ErrorCode::storage_failure, "cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { http_.listen_after_bind(); });
        http_.wait_until_ready();
        return bound;
    }

    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port) {
        require(http_.listen(host, port), ErrorCode::storage_failure, "cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        http_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ReviewQueue snapshot() const {
        std::lock_guard lock(mutex_);
        return queue_;
    }

private:
    fs::path sequence_dir(const std::string& id) const {
        const ManifestEntry* e = manifest_.find(id);
        if (e == nullptr) return {};
        return cfg_.dataset_root / e->path;
    }

    static void send_error(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
    }

    static void send_file(httplib::Response& res, const fs::path& path) {
        std::string bytes;
        try {
            bytes = read_text(path);
        } catch (const Error&) {
            send_error(res, 404, "missing " + path.filename().string());
            return;
        }
        res.set_content(std::move(bytes), "image/png");
    }

    void routes() {
        http_.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
            std::size_t limit = 20;
            if (req.has_param("limit")) {
                try {
                    limit = static_cast<std::size_t>(std::stoul(req.get_param_value("limit")));
                } catch (const std::exception&) {
                    send_error(res, 400, "limit must be a non-negative integer");
                    return;
                }
            }
            nlohmann::json items = nlohmann::json::array();
            std::lock_guard lock(mutex_);
            for (std::size_t i = 0; i < queue_.pending.size() && i < limit; ++i) {
                const std::string& id = queue_.pending[i];
                const ManifestEntry* e = manifest_.find(id);
                const int mid = e != nullptr ? e->frame_count / 2 : 0;
                items.push_back({{"sequence_id", id},
                                 {"frame_url", "/api/image/" + id + "/frame/" + std::to_string(mid)},
                                 {"mask_url", "/api/image/" + id + "/mask"}});
            }
            res.set_content(items.dump(), "application/json");
        });

        http_.Get(R"(/api/image/([^/]+)/frame/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = sequence_dir(req.matches[1]);
            if (dir.empty()) return send_error(res, 404, "unknown sequence");
            const auto files = frame_files(dir);
            const std::size_t index = std::stoul(req.matches[2]);
            if (index >= files.size()) return send_error(res, 404, "frame index out of range");
            send_file(res, files[index]);
        });

        http_.Get(R"(/api/image/([^/]+)/mask)", [this](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = sequence_dir(req.matches[1]);
            if (dir.empty()) return send_error(res, 404, "unknown sequence");
            send_file(res, dir / mask_file_name(cfg_.mask_algorithm));
        });

        http_.Post("/api/verdicts", [this](const httplib::Request& req, httplib::Response& res) {
            Verdict v;
            try {
                const auto body = nlohmann::json::parse(req.body);
                v.sequence_id = body.at("sequence_id").get<std::string>();
                v.decision = decision_from_string(body.at("decision").get<std::string>());
                v.elapsed_ms = body.value("elapsed_ms", std::int64_t{0});
                v.reviewer = body.value("reviewer", cfg_.reviewer);
            } catch (const std::exception& ex) {
                return send_error(res, 400, ex.what());
            }
            v.timestamp_ms = now_utc_ms();
            try {
                std::lock_guard lock(mutex_);
                record_verdict(queue_, v, log_);
            } catch (const Error& ex) {
                return send_error(res, ex.code() == ErrorCode::unknown_id ? 404 : 500, ex.what());
            }
            res.status = 204;
        });

        http_.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            res.set_content(nlohmann::json{{"total", queue_.total()},
                                           {"done", queue_.done.size()},
                                           {"good", queue_.count(Decision::good)},
                                           {"bad", queue_.count(Decision::bad)}}
                                .dump(),
                            "application/json");
        });

        if (cfg_.ui_dir) {
            require(http_.set_mount_point("/", cfg_.ui_dir->string()), ErrorCode::missing_path,
                    "UI directory " + cfg_.ui_dir->string());
        }
    }

    ServerConfig cfg_;
    DatasetManifest manifest_;
    VerdictLog log_;
    ReviewQueue queue_;
    mutable std::mutex mutex_;
    httplib::Server http_;
    std::thread thread_;
};

} // namespace coneboot::review

#endif
