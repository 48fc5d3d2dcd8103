#include "cascade/router.hpp"

#include "cascade/logging.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <fstream>

namespace cascade {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string role_name(BackendRole role) {
    switch (role) {
    case BackendRole::Small: return "small";
    case BackendRole::Large: return "large";
    case BackendRole::CommitteeMember: return "committee_member";
    }
    throw Error("unknown backend role");
}

BackendRole role_from_name(const std::string& name) {
    if (name == "small") return BackendRole::Small;
    if (name == "large") return BackendRole::Large;
    if (name == "committee_member") return BackendRole::CommitteeMember;
    throw Error("unknown backend role: " + name);
}

BackendOutput parse_backend_output(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const std::exception& e) {
        throw Error(std::string("backend returned invalid json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("prediction") || !j.at("prediction").is_string()) {
        throw Error("backend response missing string field: prediction");
    }
    BackendOutput out;
    out.prediction = j.at("prediction").get<std::string>();
    if (j.contains("probs")) {
        if (!j.at("probs").is_array()) {
            throw Error("backend response field probs must be an array");
        }
        ClassDistribution dist;
        for (const auto& v : j.at("probs")) {
            if (!v.is_number()) throw Error("backend response probs must be numbers");
            dist.probs.push_back(v.get<double>());
        }
        dist.validate();
        out.class_dist = std::move(dist);
    }
    if (j.contains("tokens")) {
        if (!j.at("tokens").is_array()) {
            throw Error("backend response field tokens must be an array");
        }
        std::vector<TokenDistribution> tokens;
        for (const auto& tok : j.at("tokens")) {
            if (!tok.is_object() || !tok.contains("top") || !tok.at("top").is_array()) {
                throw Error("backend response token entry missing top array");
            }
            TokenDistribution dist;
            for (const auto& pair : tok.at("top")) {
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
                    !pair[1].is_number()) {
                    throw Error("backend response token entry must be [string, number]");
                }
                dist.top.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
            }
            dist.validate();
            tokens.push_back(std::move(dist));
        }
        out.tokens = std::move(tokens);
    }
    return out;
}

namespace {

double output_uncertainty(const BackendOutput& output, UncertaintyKind base_kind) {
    switch (base_kind) {
    case UncertaintyKind::Margin:
    case UncertaintyKind::Entropy: {
        if (!output.class_dist) {
            throw Error("policy kind " + kind_name(base_kind) +
                        " needs class probabilities from the backend");
        }
        return base_kind == UncertaintyKind::Margin
                   ? margin_uncertainty(*output.class_dist)
                   : entropy_uncertainty(*output.class_dist);
    }
    case UncertaintyKind::SeqMargin: {
        if (!output.tokens) {
            throw Error("policy kind seq_margin needs token distributions from the backend");
        }
        return seq_margin_uncertainty(*output.tokens);
    }
    default:
        throw Error("not a per-output kind: " + kind_name(base_kind));
    }
}

} // namespace

Decision decide(const RoutingPolicy& policy, const BackendOutput& small_output,
                const std::vector<BackendOutput>& committee_outputs) {
    if (kind_needs_committee(policy.kind) && committee_outputs.empty()) {
        throw Error("policy kind " + kind_name(policy.kind) + " needs committee outputs");
    }
    Decision d;
    switch (policy.kind) {
    case UncertaintyKind::Margin:
    case UncertaintyKind::Entropy:
    case UncertaintyKind::SeqMargin:
        d.uncertainty = output_uncertainty(small_output, policy.kind);
        break;
    case UncertaintyKind::CommitteeMargin:
    case UncertaintyKind::CommitteeEntropy: {
        // The small model is one committee member; the rest come over the wire.
        const UncertaintyKind base = policy.kind == UncertaintyKind::CommitteeMargin
                                         ? UncertaintyKind::Margin
                                         : UncertaintyKind::Entropy;
        double sum = output_uncertainty(small_output, base);
        for (const auto& out : committee_outputs) sum += output_uncertainty(out, base);
        d.uncertainty = sum / static_cast<double>(1 + committee_outputs.size());
        break;
    }
    case UncertaintyKind::Churn: {
        std::size_t disagree = 0;
        for (const auto& out : committee_outputs) {
            if (out.prediction != small_output.prediction) ++disagree;
        }
        d.uncertainty =
            static_cast<double>(disagree) / static_cast<double>(committee_outputs.size());
        break;
    }
    case UncertaintyKind::CommitteeChurn: {
        std::vector<const std::string*> preds;
        preds.push_back(&small_output.prediction);
        for (const auto& out : committee_outputs) preds.push_back(&out.prediction);
        std::size_t disagree = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            for (std::size_t j = i + 1; j < preds.size(); ++j) {
                if (*preds[i] != *preds[j]) ++disagree;
            }
        }
        const std::size_t pairs = preds.size() * (preds.size() - 1) / 2;
        d.uncertainty = static_cast<double>(disagree) / static_cast<double>(pairs);
        break;
    }
    }
    d.deferred = should_defer(policy, d.uncertainty);
    return d;
}

const BackendSpec& RouterConfig::small_backend() const {
    for (const auto& b : backends) {
        if (b.role == BackendRole::Small) return b;
    }
    throw Error("router config has no small backend");
}

const BackendSpec& RouterConfig::large_backend() const {
    for (const auto& b : backends) {
        if (b.role == BackendRole::Large) return b;
    }
    throw Error("router config has no large backend");
}

std::vector<const BackendSpec*> RouterConfig::committee_backends() const {
    std::vector<const BackendSpec*> out;
    for (const auto& b : backends) {
        if (b.role == BackendRole::CommitteeMember) out.push_back(&b);
    }
    return out;
}

void RouterConfig::validate() const {
    std::size_t small = 0;
    std::size_t large = 0;
    for (const auto& b : backends) {
        if (b.name.empty()) throw Error("router config: backend without a name");
        if (b.url.empty()) throw Error("router config: backend without a url: " + b.name);
        if (b.timeout_ms <= 0) {
            throw Error("router config: non-positive timeout for backend: " + b.name);
        }
        if (b.role == BackendRole::Small) ++small;
        if (b.role == BackendRole::Large) ++large;
    }
    if (small != 1) throw Error("router config: exactly one small backend required");
    if (large != 1) throw Error("router config: exactly one large backend required");
    if (kind_needs_committee(policy.kind) && committee_backends().empty()) {
        throw Error("router config: policy kind " + kind_name(policy.kind) +
                    " needs at least one committee_member backend");
    }
    if (listen_port < 0 || listen_port > 65535) {
        throw Error("router config: listen port outside [0, 65535]");
    }
}

RouterConfig load_router_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open router config: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error("invalid router config " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("policy") || !j.contains("backends") ||
        !j.contains("listen")) {
        throw Error("invalid router config " + path.string() +
                    ": expected policy, backends, listen");
    }

    RouterConfig config;
    if (j.at("policy").is_string()) {
        // Path form, resolved against the config file's directory.
        std::filesystem::path p = j.at("policy").get<std::string>();
        if (p.is_relative()) p = path.parent_path() / p;
        config.policy = load_policy(p);
    } else if (j.at("policy").is_object()) {
        const auto& p = j.at("policy");
        if (!p.contains("kind") || !p.contains("threshold")) {
            throw Error("invalid router config " + path.string() +
                        ": policy needs kind and threshold");
        }
        config.policy.kind = kind_from_name(p.at("kind").get<std::string>());
        config.policy.threshold = p.at("threshold").get<double>();
        config.policy.expected_deferral_fraction = p.value("expected_deferral_fraction", 0.0);
        config.policy.provenance = p.value("provenance", std::string{});
    } else {
        throw Error("invalid router config " + path.string() +
                    ": policy must be an object or a path");
    }

    if (!j.at("backends").is_array()) {
        throw Error("invalid router config " + path.string() + ": backends must be an array");
    }
    for (const auto& b : j.at("backends")) {
        if (!b.is_object() || !b.contains("name") || !b.contains("url") ||
            !b.contains("role")) {
            throw Error("invalid router config " + path.string() +
                        ": backend needs name, url, role");
        }
        BackendSpec spec;
        spec.name = b.at("name").get<std::string>();
        spec.url = b.at("url").get<std::string>();
        spec.role = role_from_name(b.at("role").get<std::string>());
        spec.timeout_ms = b.value("timeout", b.value("timeout_ms", 2000));
        config.backends.push_back(std::move(spec));
    }

    const std::string listen = j.at("listen").get<std::string>();
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == listen.size()) {
        throw Error("invalid router config " + path.string() +
                    ": listen must be host:port");
    }
    config.listen_host = listen.substr(0, colon);
    try {
        config.listen_port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error("invalid router config " + path.string() + ": bad listen port");
    }
    config.validate();
    return config;
}

double MetricsSnapshot::deferral_rate() const {
    if (requests_total == 0) return 0.0;
    return static_cast<double>(deferred_total) / static_cast<double>(requests_total);
}

namespace {

struct AtomicBackendMetrics {
    std::atomic<std::uint64_t> calls{0};
    std::atomic<std::uint64_t> failures{0};
    std::atomic<std::uint64_t> latency_count{0};
    std::atomic<std::uint64_t> latency_sum_us{0};
    std::array<std::atomic<std::uint64_t>, kLatencyBoundsMs.size() + 1> buckets{};

    void record_latency(double ms) {
        latency_count.fetch_add(1, std::memory_order_relaxed);
        latency_sum_us.fetch_add(static_cast<std::uint64_t>(ms * 1000.0),
                                 std::memory_order_relaxed);
        std::size_t idx = kLatencyBoundsMs.size();
        for (std::size_t i = 0; i < kLatencyBoundsMs.size(); ++i) {
            if (ms <= kLatencyBoundsMs[i]) {
                idx = i;
                break;
            }
        }
        buckets[idx].fetch_add(1, std::memory_order_relaxed);
    }

    BackendMetrics snapshot() const {
        BackendMetrics m;
        m.calls = calls.load(std::memory_order_relaxed);
        m.failures = failures.load(std::memory_order_relaxed);
        m.latency_count = latency_count.load(std::memory_order_relaxed);
        m.latency_sum_ms =
            static_cast<double>(latency_sum_us.load(std::memory_order_relaxed)) / 1000.0;
        for (std::size_t i = 0; i < buckets.size(); ++i) {
            m.latency_buckets[i] = buckets[i].load(std::memory_order_relaxed);
        }
        return m;
    }
};

} // namespace

struct RouterService::Impl {
    httplib::Server server;
    std::atomic<std::uint64_t> requests_total{0};
    std::atomic<std::uint64_t> deferred_total{0};
    std::atomic<std::uint64_t> degraded_total{0};
    // Keyed by config order; the map shape is immutable while serving.
    std::vector<std::pair<std::string, std::unique_ptr<AtomicBackendMetrics>>> backends;

    AtomicBackendMetrics& metrics_for(const std::string& name) {
        for (auto& [n, m] : backends) {
            if (n == name) return *m;
        }
        throw Error("no metrics slot for backend: " + name);
    }

    // One exchange with a backend; nullopt covers transport errors,
    // non-200 statuses, and malformed bodies alike.
    std::optional<BackendOutput> call(const BackendSpec& spec, const std::string& body) {
        auto& metrics = metrics_for(spec.name);
        metrics.calls.fetch_add(1, std::memory_order_relaxed);
        httplib::Client client(spec.url);
        const auto timeout = std::chrono::milliseconds(spec.timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        const auto t0 = std::chrono::steady_clock::now();
        auto res = client.Post("/predict", body, "application/json");
        const auto t1 = std::chrono::steady_clock::now();
        if (!res || res->status != 200) {
            metrics.failures.fetch_add(1, std::memory_order_relaxed);
            log_message(LogLevel::Warn, "backend call failed: " + spec.name);
            return std::nullopt;
        }
        metrics.record_latency(std::chrono::duration<double, std::milli>(t1 - t0).count());
        try {
            return parse_backend_output(res->body);
        } catch (const Error& e) {
            metrics.failures.fetch_add(1, std::memory_order_relaxed);
            log_message(LogLevel::Warn,
                        "backend " + spec.name + " contract violation: " + e.what());
            return std::nullopt;
        }
    }
};

RouterService::RouterService(RouterConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
    config_.validate();
    for (const auto& b : config_.backends) {
        impl_->backends.emplace_back(b.name, std::make_unique<AtomicBackendMetrics>());
    }
}

RouterService::~RouterService() { stop(); }

void RouterService::start() {
    auto& server = impl_->server;

    server.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
        impl_->requests_total.fetch_add(1, std::memory_order_relaxed);
        res.set_header("Content-Type", "application/json");

        json body;
        try {
            body = json::parse(req.body);
        } catch (const std::exception&) {
            res.status = 400;
            res.body = json{{"error", "request body is not valid json"}}.dump();
            return;
        }
        if (!body.is_object() || !body.contains("input") || !body.at("input").is_string()) {
            res.status = 400;
            res.body = json{{"error", "request needs a string field: input"}}.dump();
            return;
        }
        const std::string forward = json{{"input", body.at("input").get<std::string>()}}.dump();

        const auto small_output = impl_->call(config_.small_backend(), forward);
        if (!small_output) {
            res.status = 502;
            res.body = json{{"error", "small backend unavailable"}}.dump();
            return;
        }

        bool degraded = false;
        Decision decision;
        try {
            std::vector<BackendOutput> committee;
            if (kind_needs_committee(config_.policy.kind)) {
                for (const BackendSpec* spec : config_.committee_backends()) {
                    auto out = impl_->call(*spec, forward);
                    if (!out) {
                        // Keep serving: fall back to the small prediction when
                        // the routing rule cannot be evaluated.
                        degraded = true;
                        break;
                    }
                    committee.push_back(std::move(*out));
                }
            }
            if (!degraded) decision = decide(config_.policy, *small_output, committee);
        } catch (const Error& e) {
            res.status = 502;
            res.body = json{{"error", e.what()}}.dump();
            return;
        }

        std::string prediction = small_output->prediction;
        std::string served_by = config_.small_backend().name;
        if (decision.deferred) {
            if (auto large_output = impl_->call(config_.large_backend(), forward)) {
                prediction = large_output->prediction;
                served_by = config_.large_backend().name;
            } else {
                degraded = true;
            }
        }

        if (decision.deferred) impl_->deferred_total.fetch_add(1, std::memory_order_relaxed);
        if (degraded) impl_->degraded_total.fetch_add(1, std::memory_order_relaxed);

        ordered_json reply;
        reply["prediction"] = prediction;
        reply["uncertainty"] = decision.uncertainty;
        reply["deferred"] = decision.deferred;
        reply["served_by"] = served_by;
        reply["degraded"] = degraded;
        res.status = 200;
        res.body = reply.dump();
    });

    server.Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
        const auto snap = metrics_snapshot();
        ordered_json j;
        j["requests_total"] = snap.requests_total;
        j["deferred_total"] = snap.deferred_total;
        j["degraded_total"] = snap.degraded_total;
        j["deferral_rate"] = snap.deferral_rate();
        ordered_json backends = ordered_json::object();
        for (const auto& [name, m] : snap.backends) {
            ordered_json b;
            b["calls"] = m.calls;
            b["failures"] = m.failures;
            ordered_json latency;
            latency["bounds_ms"] = kLatencyBoundsMs;
            latency["counts"] = m.latency_buckets;
            latency["count"] = m.latency_count;
            latency["sum_ms"] = m.latency_sum_ms;
            b["latency"] = latency;
            backends[name] = b;
        }
        j["backends"] = backends;
        res.set_header("Content-Type", "application/json");
        res.status = 200;
        res.body = j.dump();
    });

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        const auto& spec = config_.small_backend();
        httplib::Client client(spec.url);
        const auto timeout = std::chrono::milliseconds(spec.timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        // Any HTTP reply proves reachability; the path need not exist.
        auto reply = client.Get("/healthz");
        res.status = reply ? 200 : 503;
        res.set_header("Content-Type", "application/json");
        res.body = json{{"ok", static_cast<bool>(reply)}}.dump();
    });

    if (config_.listen_port == 0) {
        bound_port_ = server.bind_to_any_port(config_.listen_host);
        if (bound_port_ < 0) {
            throw Error("cannot bind router to " + config_.listen_host);
        }
    } else {
        if (!server.bind_to_port(config_.listen_host, config_.listen_port)) {
            throw Error("cannot bind router to " + config_.listen_host + ":" +
                        std::to_string(config_.listen_port));
        }
        bound_port_ = config_.listen_port;
    }
    serve_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    log_message(LogLevel::Info, "router listening on " + config_.listen_host + ":" +
                                    std::to_string(bound_port_));
}

void RouterService::stop() {
    if (serve_thread_.joinable()) {
        impl_->server.stop();
        serve_thread_.join();
    }
}

bool RouterService::running() const { return impl_->server.is_running(); }

int RouterService::port() const { return bound_port_; }

MetricsSnapshot RouterService::metrics_snapshot() const {
    MetricsSnapshot snap;
    snap.requests_total = impl_->requests_total.load(std::memory_order_relaxed);
    snap.deferred_total = impl_->deferred_total.load(std::memory_order_relaxed);
    snap.degraded_total = impl_->degraded_total.load(std::memory_order_relaxed);
    for (const auto& [name, metrics] : impl_->backends) {
        snap.backends.emplace_back(name, metrics->snapshot());
    }
    return snap;
}

} // namespace cascade
