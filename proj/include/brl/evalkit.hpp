#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "brl/core.hpp"
#include "brl/simworld.hpp"

namespace brl {

enum class Outcome : std::uint8_t { Success, Timeout, Collision, OffroadTerminal };

constexpr std::string_view to_string(Outcome o) noexcept {
    switch (o) {
        case Outcome::Success: return "success";
        case Outcome::Timeout: return "timeout";
        case Outcome::Collision: return "collision";
        case Outcome::OffroadTerminal: return "offroad";
    }
    return "?";
}

/// One decision step of an episode.
struct StepRecord {
    std::uint64_t step = 0;
    std::uint64_t episode = 0;
    StateVector state{};
    Action action = Action::Forward;
    double reward = 0.0;
    double td_error = 0.0;
    std::size_t n_components = 0;
    Measures measures;
};

struct EpisodeRecord {
    Scenario scenario = Scenario::Straight;
    std::vector<StepRecord> steps;
    Outcome outcome = Outcome::Timeout;
    double total_distance = 0.0;

    bool collided() const noexcept {
        if (outcome == Outcome::Collision) {
            return true;
        }
        for (const StepRecord& s : steps) {
            if (s.measures.collision) {
                return true;
            }
        }
        return false;
    }
};

/// Table-style aggregate over a set of episodes.
struct MetricSummary {
    double offroad = 0.0;
    double otherlane = 0.0;
    double either = 0.0;
    double success = 0.0;
    double no_collision = 0.0;
    double score = 0.0;
    double dist = 0.0;
    std::size_t episodes = 0;
    std::size_t steps = 0;
};

inline constexpr double kDefaultLaneThreshold = 0.20;

/// Score averages the three "good" rates: staying in lane, succeeding, not colliding.
constexpr double score_of(double either, double success, double no_collision) noexcept {
    return ((1.0 - either) + success + no_collision) / 3.0;
}

inline MetricSummary summarize(const std::vector<EpisodeRecord>& records,
                               double threshold = kDefaultLaneThreshold) {
    if (records.empty()) {
        throw std::invalid_argument("summarize: no episodes");
    }
    MetricSummary out;
    std::size_t off = 0;
    std::size_t other = 0;
    std::size_t either = 0;
    std::size_t steps = 0;
    std::size_t successes = 0;
    std::size_t clean = 0;
    for (const EpisodeRecord& ep : records) {
        for (const StepRecord& s : ep.steps) {
            const bool o = s.measures.offroad_fraction > threshold;
            const bool l = s.measures.otherlane_fraction > threshold;
            off += o ? 1 : 0;
            other += l ? 1 : 0;
            either += (o || l) ? 1 : 0;
            ++steps;
        }
        successes += ep.outcome == Outcome::Success ? 1 : 0;
        clean += ep.collided() ? 0 : 1;
        out.dist += ep.total_distance;
    }
    const double n_steps = steps == 0 ? 1.0 : static_cast<double>(steps);
    const auto n_eps = static_cast<double>(records.size());
    out.offroad = static_cast<double>(off) / n_steps;
    out.otherlane = static_cast<double>(other) / n_steps;
    out.either = static_cast<double>(either) / n_steps;
    out.success = static_cast<double>(successes) / n_eps;
    out.no_collision = static_cast<double>(clean) / n_eps;
    out.score = score_of(out.either, out.success, out.no_collision);
    out.episodes = records.size();
    out.steps = steps;
    return out;
}

struct BetaParams {
    double alpha = 0.5;
    double beta = 0.5;

    double mean() const noexcept { return alpha / (alpha + beta); }

    double log_pdf(double x) const noexcept {
        const double log_b = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
        return (alpha - 1.0) * std::log(x) + (beta - 1.0) * std::log1p(-x) - log_b;
    }

    /// Density on the open interval (0, 1); 0 outside it.
    double pdf(double x) const noexcept {
        if (!(x > 0.0 && x < 1.0)) {
            return 0.0;
        }
        return std::exp(log_pdf(x));
    }
};

/// Posterior over a success rate under the Jeffreys Beta(0.5, 0.5) prior.
constexpr BetaParams beta_posterior(std::uint64_t successes, std::uint64_t failures) noexcept {
    return {static_cast<double>(successes) + 0.5, static_cast<double>(failures) + 0.5};
}

struct InfractionRate {
    std::size_t count = 0;
    /// km / count, or the total km when the class never occurred.
    double km_between = 0.0;
    bool unbounded = false;
};

struct InfractionReport {
    double total_km = 0.0;
    InfractionRate opposite_lane;
    InfractionRate sidewalk;
    InfractionRate collision_static;
    InfractionRate collision_dynamic;
};

namespace detail {

inline InfractionRate rate_of(std::size_t count, double km) {
    if (count == 0) {
        return {0, km, true};
    }
    return {count, km / static_cast<double>(count), false};
}

}  // namespace detail

/// Counts the onset of each infraction (a run of consecutive infracting steps counts once)
/// and reports the average distance between them.
inline InfractionReport infractions_per_km(const std::vector<EpisodeRecord>& records,
                                           double threshold = kDefaultLaneThreshold) {
    if (records.empty()) {
        throw std::invalid_argument("infractions_per_km: no episodes");
    }
    std::size_t opposite = 0;
    std::size_t sidewalk = 0;
    std::size_t hit_static = 0;
    std::size_t hit_dynamic = 0;
    double metres = 0.0;
    for (const EpisodeRecord& ep : records) {
        bool in_other = false;
        bool in_off = false;
        for (const StepRecord& s : ep.steps) {
            const bool other = s.measures.otherlane_fraction > threshold;
            const bool off = s.measures.offroad_fraction > threshold;
            opposite += (other && !in_other) ? 1 : 0;
            sidewalk += (off && !in_off) ? 1 : 0;
            in_other = other;
            in_off = off;
            if (s.measures.collision) {
                hit_static += s.measures.collision_kind == CollisionKind::Dynamic ? 0 : 1;
                hit_dynamic += s.measures.collision_kind == CollisionKind::Dynamic ? 1 : 0;
            }
        }
        metres += ep.total_distance;
    }
    InfractionReport out;
    out.total_km = metres / 1000.0;
    out.opposite_lane = detail::rate_of(opposite, out.total_km);
    out.sidewalk = detail::rate_of(sidewalk, out.total_km);
    out.collision_static = detail::rate_of(hit_static, out.total_km);
    out.collision_dynamic = detail::rate_of(hit_dynamic, out.total_km);
    return out;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline constexpr std::string_view kStepCsvHeader =
    "step,episode,r_o,r_l,reward,td_error,action,n_components";

/// Per-step trace in the fixed column order of kStepCsvHeader.
inline std::string steps_csv(const std::vector<EpisodeRecord>& records) {
    std::string out(kStepCsvHeader);
    out += '\n';
    for (const EpisodeRecord& ep : records) {
        for (const StepRecord& s : ep.steps) {
            out += std::to_string(s.step);
            out += ',';
            out += std::to_string(s.episode);
            out += ',';
            out += format_double(s.measures.offroad_fraction);
            out += ',';
            out += format_double(s.measures.otherlane_fraction);
            out += ',';
            out += format_double(s.reward);
            out += ',';
            out += format_double(s.td_error);
            out += ',';
            out += std::to_string(index(s.action));
            out += ',';
            out += std::to_string(s.n_components);
            out += '\n';
        }
    }
    return out;
}

/// Parsed row of the per-step CSV.
struct StepRow {
    std::uint64_t step = 0;
    std::uint64_t episode = 0;
    double r_o = 0.0;
    double r_l = 0.0;
    double reward = 0.0;
    double td_error = 0.0;
    std::size_t action = 0;
    std::size_t n_components = 0;
};

inline std::vector<StepRow> parse_steps_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kStepCsvHeader) {
        throw std::invalid_argument("parse_steps_csv: unexpected header");
    }
    std::vector<StepRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::array<std::string, 8> f;
        std::istringstream ls(line);
        for (std::string& field : f) {
            if (!std::getline(ls, field, ',')) {
                throw std::invalid_argument("parse_steps_csv: short row");
            }
        }
        StepRow r;
        r.step = std::stoull(f[0]);
        r.episode = std::stoull(f[1]);
        r.r_o = std::stod(f[2]);
        r.r_l = std::stod(f[3]);
        r.reward = std::stod(f[4]);
        r.td_error = std::stod(f[5]);
        r.action = std::stoul(f[6]);
        r.n_components = std::stoul(f[7]);
        rows.push_back(r);
    }
    return rows;
}

inline json to_json(const MetricSummary& m) {
    return json{{"offroad", m.offroad},     {"otherlane", m.otherlane},
                {"either", m.either},       {"success", m.success},
                {"no_collision", m.no_collision}, {"score", m.score},
                {"dist", m.dist},           {"episodes", m.episodes},
                {"steps", m.steps}};
}

inline json to_json(const BetaParams& b) {
    return json{{"alpha", b.alpha}, {"beta", b.beta}, {"mean", b.mean()}};
}

inline json to_json(const InfractionRate& r) {
    return json{{"count", r.count}, {"km_between", r.km_between}, {"unbounded", r.unbounded}};
}

inline json to_json(const InfractionReport& r) {
    return json{{"total_km", r.total_km},
                {"opposite_lane", to_json(r.opposite_lane)},
                {"sidewalk", to_json(r.sidewalk)},
                {"collision_static", to_json(r.collision_static)},
                {"collision_dynamic", to_json(r.collision_dynamic)}};
}

/// Summary document: metrics, success / no-collision posteriors, infraction rates.
inline json summary_json(const std::vector<EpisodeRecord>& records,
                         double threshold = kDefaultLaneThreshold) {
    const MetricSummary m = summarize(records, threshold);
    std::uint64_t succ = 0;
    std::uint64_t clean = 0;
    for (const EpisodeRecord& ep : records) {
        succ += ep.outcome == Outcome::Success ? 1 : 0;
        clean += ep.collided() ? 0 : 1;
    }
    const std::uint64_t n = records.size();
    return json{{"metrics", to_json(m)},
                {"threshold", threshold},
                {"beta_success", to_json(beta_posterior(succ, n - succ))},
                {"beta_no_collision", to_json(beta_posterior(clean, n - clean))},
                {"infractions", to_json(infractions_per_km(records, threshold))}};
}

/// Density table of a beta posterior on an even grid over (0, 1).
inline std::string beta_curve_csv(const BetaParams& b, std::size_t points = 199) {
    std::string out = "x,pdf\n";
    for (std::size_t i = 1; i <= points; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(points + 1);
        out += format_double(x) + ',' + format_double(b.pdf(x)) + '\n';
    }
    return out;
}

/// Histogram of per-step lane position: opposite-lane share on the left (negative bins),
/// off-road share on the right (positive bins), in 5% steps.
inline std::string lane_histogram_csv(const std::vector<EpisodeRecord>& records) {
    std::array<std::size_t, 41> bins{};
    for (const EpisodeRecord& ep : records) {
        for (const StepRecord& s : ep.steps) {
            const double v = s.measures.offroad_fraction > 0.0 ? s.measures.offroad_fraction
                                                               : -s.measures.otherlane_fraction;
            const auto k = static_cast<std::size_t>(std::lround(v * 20.0) + 20);
            ++bins[std::min<std::size_t>(k, bins.size() - 1)];
        }
    }
    std::string out = "bin,count\n";
    for (std::size_t k = 0; k < bins.size(); ++k) {
        out += format_double((static_cast<double>(k) - 20.0) / 20.0) + ',' + std::to_string(bins[k]) +
               '\n';
    }
    return out;
}

/// Raised when an export or checkpoint path cannot be written or read.
class IoError : public std::runtime_error {
public:
    IoError(const std::filesystem::path& path, const std::string& what)
        : std::runtime_error(path.string() + ": " + what), path_(path) {}

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError(path, "cannot open for writing");
    }
    os << text;
    if (!os) {
        throw IoError(path, "write failed");
    }
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError(path, "cannot open for reading");
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Writes steps.csv, summary.json, the two beta curves and the lane histogram into `dir`.
/// An empty record list produces a header-only steps.csv and no summary.
inline void export_records(const std::vector<EpisodeRecord>& records,
                           const std::filesystem::path& dir,
                           double threshold = kDefaultLaneThreshold) {
    write_text(dir / "steps.csv", steps_csv(records));
    if (records.empty()) {
        return;
    }
    const json summary = summary_json(records, threshold);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    const auto beta_of = [](const json& j) {
        return BetaParams{j.at("alpha").get<double>(), j.at("beta").get<double>()};
    };
    write_text(dir / "beta_success.csv", beta_curve_csv(beta_of(summary.at("beta_success"))));
    write_text(dir / "beta_no_collision.csv",
               beta_curve_csv(beta_of(summary.at("beta_no_collision"))));
    write_text(dir / "lane_histogram.csv", lane_histogram_csv(records));
}

}  // namespace brl
