#pragma once

#include "cascade/calibration.hpp"
#include "cascade/types.hpp"
#include "cascade/uncertainty.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace cascade {

enum class BackendRole { Small, Large, CommitteeMember };

std::string role_name(BackendRole role);
BackendRole role_from_name(const std::string& name);

struct BackendSpec {
    std::string name;
    std::string url; // http base address
    int timeout_ms = 2000;
    BackendRole role = BackendRole::Small;
};

/// One backend reply. Committee members may return a bare prediction;
/// margin/entropy policies need the class distribution.
struct BackendOutput {
    std::string prediction;
    std::optional<ClassDistribution> class_dist;
    std::optional<std::vector<TokenDistribution>> tokens;
};

struct Decision {
    double uncertainty = 0.0;
    bool deferred = false;
};

/// Wire shape: {"prediction": str, "probs": [...], "labels": [...]} or
/// the token form; anything beyond "prediction" is optional.
BackendOutput parse_backend_output(const std::string& body);

/// Pure routing rule. Committee outputs are required for churn and
/// committee kinds; the small output counts as a committee member for
/// the pairwise kinds.
Decision decide(const RoutingPolicy& policy, const BackendOutput& small_output,
                const std::vector<BackendOutput>& committee_outputs = {});

struct RouterConfig {
    RoutingPolicy policy;
    std::vector<BackendSpec> backends;
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;

    const BackendSpec& small_backend() const;
    const BackendSpec& large_backend() const;
    std::vector<const BackendSpec*> committee_backends() const;
    void validate() const;
};

RouterConfig load_router_config(const std::filesystem::path& path);

/// Fixed upper bounds in ms; the last bucket is unbounded.
inline constexpr std::array<double, 12> kLatencyBoundsMs = {
    1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000,
};

struct BackendMetrics {
    std::uint64_t calls = 0;
    std::uint64_t failures = 0;
    std::uint64_t latency_count = 0;
    double latency_sum_ms = 0.0;
    std::array<std::uint64_t, kLatencyBoundsMs.size() + 1> latency_buckets{};
};

struct MetricsSnapshot {
    std::uint64_t requests_total = 0;
    std::uint64_t deferred_total = 0;
    std::uint64_t degraded_total = 0;
    std::vector<std::pair<std::string, BackendMetrics>> backends;

    double deferral_rate() const;
};

/// Deferral proxy. The small backend is called exactly once per request,
/// the large one at most once; when the large call fails the response
/// falls back to the small prediction with degraded = true.
class RouterService {
public:
    explicit RouterService(RouterConfig config);
    ~RouterService();

    RouterService(const RouterService&) = delete;
    RouterService& operator=(const RouterService&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    void start();
    void stop();
    bool running() const;

    /// Actual bound port, valid after start().
    int port() const;

    const RouterConfig& config() const { return config_; }
    MetricsSnapshot metrics_snapshot() const;

private:
    struct Impl;
    RouterConfig config_;
    std::unique_ptr<Impl> impl_;
    std::thread serve_thread_;
    int bound_port_ = 0;
};

} // namespace cascade
