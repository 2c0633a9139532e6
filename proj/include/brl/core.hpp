#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace brl {

using json = nlohmann::json;

template <std::size_t Dim>
using Vec = std::array<double, Dim>;

/// 6 image regions x 5 semantic classes.
inline constexpr std::size_t kRegions = 6;
inline constexpr std::size_t kClasses = 5;
inline constexpr std::size_t kStateDim = kRegions * kClasses;

/// l1-normalized perceptual state, region-major / class-minor.
using StateVector = Vec<kStateDim>;

enum class Action : std::uint8_t { Forward = 0, TurnRight = 1, TurnLeft = 2, Backward = 3 };

inline constexpr std::size_t kActionCount = 4;
inline constexpr std::array<Action, kActionCount> kAllActions{Action::Forward, Action::TurnRight,
                                                              Action::TurnLeft, Action::Backward};

constexpr std::size_t index(Action a) noexcept { return static_cast<std::size_t>(a); }

inline Action action_from_index(std::size_t i) {
    if (i >= kActionCount) {
        throw std::out_of_range("action index " + std::to_string(i));
    }
    return static_cast<Action>(i);
}

constexpr std::string_view to_string(Action a) noexcept {
    switch (a) {
        case Action::Forward: return "forward";
        case Action::TurnRight: return "right";
        case Action::TurnLeft: return "left";
        case Action::Backward: return "backward";
    }
    return "?";
}

/// One step of the exponential schedule x <- rate * (final - x) + x.
constexpr double decay_step(double x, double rate, double final_value) noexcept {
    return rate * (final_value - x) + x;
}

/// Init/rate/final triple for a parameter that decays toward `final_value` once per decision step.
struct Schedule {
    double init = 0.0;
    double rate = 0.0;
    double final_value = 0.0;

    double after(std::uint64_t steps) const noexcept {
        double x = init;
        for (std::uint64_t i = 0; i < steps; ++i) {
            x = decay_step(x, rate, final_value);
        }
        return x;
    }

    friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// Mixture-wide Normal-Inverse-Gamma prior, identical in every dimension.
struct PriorConfig {
    double mean = 1.0 / static_cast<double>(kStateDim);
    double kappa = 1.0;
    double dof = 3.0;
    double scale = 1.0 / static_cast<double>(kStateDim * kStateDim);

    friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

/// Learning hyperparameters. Defaults are the published parameter table.
struct AgentConfig {
    double gamma = 0.9;
    double t_lower = -10.0;
    double t_upper = -5.0;
    std::array<double, 5> reward_coeffs{50.0, 40.0, 30.0, 15.0, 10.0};
    double v_target = 8.0;
    std::uint64_t t_max = 4500;
    Schedule alpha{0.99, 1e-5, 0.01};
    Schedule tau{0.5, 7e-3, 0.99};
    Schedule rho{0.1, 3e-7, 0.01};
    PriorConfig prior{};

    friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

/// Current values of the decaying parameters.
struct ScheduleState {
    double alpha = 0.0;
    double tau = 0.0;
    double rho = 0.0;
    std::uint64_t step = 0;

    static ScheduleState initial(const AgentConfig& cfg) noexcept {
        return {cfg.alpha.init, cfg.tau.init, cfg.rho.init, 0};
    }

    void advance(const AgentConfig& cfg) noexcept {
        alpha = decay_step(alpha, cfg.alpha.rate, cfg.alpha.final_value);
        tau = decay_step(tau, cfg.tau.rate, cfg.tau.final_value);
        rho = decay_step(rho, cfg.rho.rate, cfg.rho.final_value);
        ++step;
    }

    friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

/// Raised on a malformed or invalid configuration; `field()` names the offending key path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

namespace detail {

inline double read_number(const json& obj, const std::string& key, const std::string& path,
                          double fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number()) {
        throw ConfigError(path + key, "expected a number");
    }
    return v.get<double>();
}

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                           const std::string& path) {
    for (const auto& [key, value] : obj.items()) {
        bool found = false;
        for (auto k : known) {
            found = found || key == k;
        }
        if (!found) {
            throw ConfigError(path + key, "unknown key");
        }
    }
}

inline Schedule read_schedule(const json& obj, const std::string& key, Schedule fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const json& s = obj.at(key);
    if (!s.is_object()) {
        throw ConfigError(key, "expected an object with init/rate/final");
    }
    const std::string path = key + ".";
    reject_unknown(s, {"init", "rate", "final"}, path);
    return {read_number(s, "init", path, fallback.init), read_number(s, "rate", path, fallback.rate),
            read_number(s, "final", path, fallback.final_value)};
}

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) {
        throw ConfigError(field, what);
    }
}

inline void validate_schedule(const Schedule& s, const std::string& name, double lo, double hi) {
    require(s.rate >= 0.0 && s.rate <= 1.0, name + ".rate", "must lie in [0, 1]");
    require(s.init >= lo && s.init <= hi, name + ".init", "out of range");
    require(s.final_value >= lo && s.final_value <= hi, name + ".final", "out of range");
}

}  // namespace detail

inline void validate(const AgentConfig& cfg) {
    using detail::require;
    require(cfg.gamma >= 0.0 && cfg.gamma < 1.0, "gamma", "must lie in [0, 1)");
    require(std::isfinite(cfg.t_lower), "t_lower", "must be finite");
    require(std::isfinite(cfg.t_upper), "t_upper", "must be finite");
    require(cfg.t_lower < cfg.t_upper, "t_lower", "must be below t_upper");
    for (std::size_t k = 0; k < cfg.reward_coeffs.size(); ++k) {
        require(cfg.reward_coeffs[k] > 0.0 && std::isfinite(cfg.reward_coeffs[k]),
                "r_k" + std::to_string(k + 1), "must be positive");
    }
    require(cfg.v_target > 0.0 && std::isfinite(cfg.v_target), "v_target", "must be positive");
    require(cfg.t_max > 0, "t_max", "must be positive");
    detail::validate_schedule(cfg.alpha, "alpha", 0.0, 1.0);
    detail::validate_schedule(cfg.tau, "tau", 0.0, 1.0);
    detail::validate_schedule(cfg.rho, "rho", 0.0, 1e9);
    require(std::isfinite(cfg.prior.mean), "prior.mean", "must be finite");
    require(cfg.prior.kappa > 0.0, "prior.kappa", "must be positive");
    require(cfg.prior.dof > 0.0, "prior.dof", "must be positive");
    require(cfg.prior.scale > 0.0, "prior.scale", "must be positive");
}

/// Reads agent settings from an already-parsed object; absent keys keep their defaults.
/// Keys in `extra_sections` are skipped so sibling modules can share the document.
inline AgentConfig agent_config_from_json(const json& doc,
                                          std::initializer_list<std::string_view> extra_sections = {}) {
    if (doc.is_null()) {
        return AgentConfig{};
    }
    if (!doc.is_object()) {
        throw ConfigError("", "configuration root must be an object");
    }
    const AgentConfig d{};
    AgentConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        static constexpr std::array<std::string_view, 14> known{
            "gamma", "t_lower", "t_upper", "r_k1", "r_k2", "r_k3", "r_k4", "r_k5",
            "v_target", "t_max", "alpha", "tau", "rho", "prior"};
        bool found = false;
        for (auto k : known) {
            found = found || key == k;
        }
        for (auto k : extra_sections) {
            found = found || key == k;
        }
        if (!found) {
            throw ConfigError(key, "unknown key");
        }
    }
    cfg.gamma = detail::read_number(doc, "gamma", "", d.gamma);
    cfg.t_lower = detail::read_number(doc, "t_lower", "", d.t_lower);
    cfg.t_upper = detail::read_number(doc, "t_upper", "", d.t_upper);
    for (std::size_t k = 0; k < 5; ++k) {
        cfg.reward_coeffs[k] =
            detail::read_number(doc, "r_k" + std::to_string(k + 1), "", d.reward_coeffs[k]);
    }
    cfg.v_target = detail::read_number(doc, "v_target", "", d.v_target);
    if (doc.contains("t_max")) {
        const json& t = doc.at("t_max");
        if (!t.is_number_integer() || t.get<std::int64_t>() <= 0) {
            throw ConfigError("t_max", "expected a positive integer");
        }
        cfg.t_max = t.get<std::uint64_t>();
    }
    cfg.alpha = detail::read_schedule(doc, "alpha", d.alpha);
    cfg.tau = detail::read_schedule(doc, "tau", d.tau);
    cfg.rho = detail::read_schedule(doc, "rho", d.rho);
    if (doc.contains("prior")) {
        const json& p = doc.at("prior");
        if (!p.is_object()) {
            throw ConfigError("prior", "expected an object");
        }
        detail::reject_unknown(p, {"mean", "kappa", "dof", "scale"}, "prior.");
        cfg.prior.mean = detail::read_number(p, "mean", "prior.", d.prior.mean);
        cfg.prior.kappa = detail::read_number(p, "kappa", "prior.", d.prior.kappa);
        cfg.prior.dof = detail::read_number(p, "dof", "prior.", d.prior.dof);
        cfg.prior.scale = detail::read_number(p, "scale", "prior.", d.prior.scale);
    }
    validate(cfg);
    return cfg;
}

/// Parses a configuration document. An empty (or whitespace-only) document yields the defaults.
inline AgentConfig load_config(std::string_view document) {
    if (document.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        return AgentConfig{};
    }
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("parse error: ") + e.what());
    }
    return agent_config_from_json(doc);
}

inline json to_json(const Schedule& s) {
    return json{{"init", s.init}, {"rate", s.rate}, {"final", s.final_value}};
}

inline json to_json(const AgentConfig& cfg) {
    json doc;
    doc["gamma"] = cfg.gamma;
    doc["t_lower"] = cfg.t_lower;
    doc["t_upper"] = cfg.t_upper;
    for (std::size_t k = 0; k < 5; ++k) {
        doc["r_k" + std::to_string(k + 1)] = cfg.reward_coeffs[k];
    }
    doc["v_target"] = cfg.v_target;
    doc["t_max"] = cfg.t_max;
    doc["alpha"] = to_json(cfg.alpha);
    doc["tau"] = to_json(cfg.tau);
    doc["rho"] = to_json(cfg.rho);
    doc["prior"] = json{{"mean", cfg.prior.mean},
                        {"kappa", cfg.prior.kappa},
                        {"dof", cfg.prior.dof},
                        {"scale", cfg.prior.scale}};
    return doc;
}

inline std::string serialize(const AgentConfig& cfg) { return to_json(cfg).dump(2); }

}  // namespace brl
