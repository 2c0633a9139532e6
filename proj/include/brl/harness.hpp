#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "brl/agent.hpp"
#include "brl/checkpoint.hpp"
#include "brl/core.hpp"
#include "brl/evalkit.hpp"
#include "brl/perception.hpp"
#include "brl/random.hpp"
#include "brl/simworld.hpp"

namespace brl {

/// Episode plumbing: decision period and termination rules.
struct EpisodeConfig {
    std::size_t decision_ticks = 7;
    double dt = kDefaultTickDt;
    std::size_t max_steps = 400;
    /// Episode ends once the vehicle center is this far beyond the road edge.
    double offroad_margin = 5.0;

    friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

/// Everything a run needs besides the seed.
struct ExperimentConfig {
    AgentConfig agent;
    TrackSpec track;
    CameraSpec camera;
    NoiseConfig noise;
    EpisodeConfig episode;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline json to_json(const ExperimentConfig& cfg) {
    json doc = to_json(cfg.agent);
    json track = to_json(cfg.track);
    track.erase("scenario");
    track.erase("spawn_offset");
    track.erase("spawn_heading");
    doc["track"] = track;
    doc["camera"] = to_json(cfg.camera);
    doc["noise"] = to_json(cfg.noise);
    doc["episode"] = json{{"decision_ticks", cfg.episode.decision_ticks},
                          {"dt", cfg.episode.dt},
                          {"max_steps", cfg.episode.max_steps},
                          {"offroad_margin", cfg.episode.offroad_margin}};
    return doc;
}

inline ExperimentConfig experiment_from_json(const json& doc) {
    ExperimentConfig cfg;
    cfg.agent = agent_config_from_json(doc, {"track", "camera", "noise", "episode"});
    if (doc.is_null()) {
        return cfg;
    }
    if (doc.contains("track")) {
        cfg.track = track_spec_from_json(doc.at("track"), cfg.track);
    }
    if (doc.contains("camera")) {
        cfg.camera = camera_from_json(doc.at("camera"), cfg.camera);
    }
    if (doc.contains("noise")) {
        cfg.noise = noise_from_json(doc.at("noise"), cfg.noise);
    }
    if (doc.contains("episode")) {
        const json& e = doc.at("episode");
        if (!e.is_object()) {
            throw ConfigError("episode", "expected an object");
        }
        detail::reject_unknown(e, {"decision_ticks", "dt", "max_steps", "offroad_margin"}, "episode.");
        cfg.episode.decision_ticks = e.value("decision_ticks", cfg.episode.decision_ticks);
        cfg.episode.dt = detail::read_number(e, "dt", "episode.", cfg.episode.dt);
        cfg.episode.max_steps = e.value("max_steps", cfg.episode.max_steps);
        cfg.episode.offroad_margin =
            detail::read_number(e, "offroad_margin", "episode.", cfg.episode.offroad_margin);
        detail::require(cfg.episode.decision_ticks > 0, "episode.decision_ticks", "must be positive");
        detail::require(cfg.episode.dt > 0.0, "episode.dt", "must be positive");
        detail::require(cfg.episode.max_steps > 0, "episode.max_steps", "must be positive");
    }
    return cfg;
}

inline ExperimentConfig load_experiment(std::string_view document) {
    if (document.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        return ExperimentConfig{};
    }
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("parse error: ") + e.what());
    }
    return experiment_from_json(doc);
}

/// Rendered (and possibly corrupted) camera frame reduced to what the agent and reward see.
struct Observation {
    StateVector state{};
    double road_view = 0.0;
};

inline Observation observe(const WorldState& world, const CameraSpec& camera,
                           const NoiseConfig& noise, Rng& noise_rng) {
    SemanticMap map = render_semantic(world, camera);
    if (noise.active()) {
        map = corrupt(map, noise, noise_rng);
    }
    return {extract_state(map), road_view(map)};
}

/// Result of holding one action for a whole decision period.
struct DecisionResult {
    Measures measures;
    double distance = 0.0;
};

/// Runs `decision_ticks` simulator ticks under `action`; stops early on collision.
inline DecisionResult drive(WorldState& world, Action action, const EpisodeConfig& ep) {
    const ControlSignal control = apply_action(action);
    DecisionResult out;
    for (std::size_t k = 0; k < ep.decision_ticks; ++k) {
        out.measures = tick(world, control, ep.dt);
        out.distance += out.measures.distance_delta;
        if (out.measures.collision) {
            break;
        }
    }
    out.measures.distance_delta = out.distance;
    return out;
}

/// Terminal outcome after a decision, if any.
inline std::optional<Outcome> check_termination(const WorldState& world, const Measures& m,
                                                std::size_t episode_steps, const EpisodeConfig& ep) {
    if (m.collision) {
        return Outcome::Collision;
    }
    if (std::abs(m.lateral) > world.track.spec.lane_width + ep.offroad_margin) {
        return Outcome::OffroadTerminal;
    }
    if (m.progress >= world.track.total_length) {
        return Outcome::Success;
    }
    if (episode_steps >= ep.max_steps) {
        return Outcome::Timeout;
    }
    return std::nullopt;
}

/// Per-purpose random streams derived from one master seed.
struct Streams {
    Rng track;
    Rng noise;
    Rng policy;

    static Streams training(std::uint64_t seed) {
        return {Rng::derive(seed, "track"), Rng::derive(seed, "noise"), Rng::derive(seed, "policy")};
    }

    static Streams evaluation(std::uint64_t seed) {
        return {Rng::derive(seed, "eval-track"), Rng::derive(seed, "eval-noise"),
                Rng::derive(seed, "eval-policy")};
    }
};

/// Online training loop: episodes over a rotating scenario list, one agent step per decision.
class Trainer {
public:
    Trainer(ExperimentConfig cfg, std::uint64_t seed,
            std::vector<Scenario> scenarios = {kAllScenarios.begin(), kAllScenarios.end()})
        : cfg_(std::move(cfg)),
          scenarios_(std::move(scenarios)),
          agent_(cfg_.agent),
          sched_(ScheduleState::initial(cfg_.agent)),
          streams_(Streams::training(seed)),
          seed_(seed) {
        if (scenarios_.empty()) {
            throw std::invalid_argument("Trainer: no scenarios");
        }
        cfg_.noise.validate();
    }

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const DrivingAgent& agent() const noexcept { return agent_; }
    const ScheduleState& schedule() const noexcept { return sched_; }
    const std::vector<EpisodeRecord>& log() const noexcept { return log_; }
    std::uint64_t steps_done() const noexcept { return sched_.step; }

    /// Finished episodes followed by the one in progress (if it has any steps).
    std::vector<EpisodeRecord> history() const {
        std::vector<EpisodeRecord> out = log_;
        if (episode_active_ && !current_.steps.empty()) {
            out.push_back(current_);
        }
        return out;
    }
    const Streams& streams() const noexcept { return streams_; }

    /// Trains until the decision-step count reaches `t_max` (or `limit`, if smaller).
    void run(std::optional<std::uint64_t> limit = std::nullopt,
             const std::function<void(const StepRecord&, const StepDiagnostics&)>& on_step = {}) {
        const std::uint64_t target =
            std::min<std::uint64_t>(cfg_.agent.t_max, limit.value_or(cfg_.agent.t_max));
        while (sched_.step < target) {
            step_once(on_step);
        }
    }

    /// Runs `n` more decision steps regardless of t_max.
    void run_steps(std::uint64_t n) {
        for (std::uint64_t i = 0; i < n; ++i) {
            step_once({});
        }
    }

    json to_checkpoint() const {
        json trainer{{"seed", seed_},
                     {"scenarios", json::array()},
                     {"scenario_index", scenario_index_},
                     {"episode", episode_},
                     {"episode_steps", episode_steps_},
                     {"episode_active", episode_active_},
                     {"state", vec_to_json(state_)},
                     {"world", episode_active_ ? to_json(world_) : json()}};
        for (Scenario s : scenarios_) {
            trainer["scenarios"].push_back(std::string(to_string(s)));
        }
        return json{{"format", std::string(kCheckpointFormat)},
                    {"format_version", kCheckpointVersion},
                    {"config", to_json(cfg_)},
                    {"model", model_to_json(agent_)},
                    {"schedule", to_json(sched_)},
                    {"rng",
                     {{"track", streams_.track.state()},
                      {"noise", streams_.noise.state()},
                      {"policy", streams_.policy.state()}}},
                    {"trainer", trainer}};
    }

    static Trainer from_checkpoint(const json& doc) {
        check_header(doc);
        const ExperimentConfig cfg = experiment_from_json(doc.at("config"));
        const json& tj = doc.at("trainer");
        std::vector<Scenario> scenarios;
        for (const json& s : tj.at("scenarios")) {
            scenarios.push_back(scenario_from_string(s.get<std::string>()));
        }
        Trainer t(cfg, tj.at("seed").get<std::uint64_t>(), scenarios);
        t.agent_ = model_from_json<kStateDim>(doc.at("model"), cfg.agent);
        t.sched_ = schedule_state_from_json(doc.at("schedule"));
        t.streams_.track.set_state(doc.at("rng").at("track").get<std::string>());
        t.streams_.noise.set_state(doc.at("rng").at("noise").get<std::string>());
        t.streams_.policy.set_state(doc.at("rng").at("policy").get<std::string>());
        t.scenario_index_ = tj.at("scenario_index").get<std::size_t>();
        t.episode_ = tj.at("episode").get<std::uint64_t>();
        t.episode_steps_ = tj.at("episode_steps").get<std::size_t>();
        t.episode_active_ = tj.at("episode_active").get<bool>();
        t.state_ = vec_from_json<kStateDim>(tj.at("state"), "trainer.state");
        if (t.episode_active_) {
            t.world_ = world_from_json(tj.at("world"));
            t.current_.scenario = t.world_.track.spec.scenario;
        }
        return t;
    }

    static void check_header(const json& doc) {
        if (!doc.is_object() || doc.value("format", std::string()) != kCheckpointFormat) {
            throw ConfigError("format", "not a checkpoint document");
        }
        if (doc.value("format_version", -1) != kCheckpointVersion) {
            throw ConfigError("format_version", "unsupported checkpoint version");
        }
    }

private:
    void start_episode() {
        TrackSpec spec = cfg_.track;
        spec.scenario = scenarios_[scenario_index_ % scenarios_.size()];
        ++scenario_index_;
        world_ = build_track(spec, streams_.track);
        state_ = observe(world_, cfg_.camera, cfg_.noise, streams_.noise).state;
        agent_.bootstrap(state_);
        episode_steps_ = 0;
        episode_active_ = true;
        current_ = EpisodeRecord{};
        current_.scenario = spec.scenario;
    }

    void step_once(const std::function<void(const StepRecord&, const StepDiagnostics&)>& on_step) {
        if (!episode_active_) {
            start_episode();
        }
        const ActionChoice choice = agent_.select_action(state_, sched_.tau, streams_.policy);
        const DecisionResult res = drive(world_, choice.action, cfg_.episode);
        const Observation next = observe(world_, cfg_.camera, cfg_.noise, streams_.noise);
        const double r = reward_breakdown(res.measures, next.road_view,
                                          RewardConfig::from(cfg_.agent)).total;
        ++episode_steps_;
        const std::optional<Outcome> end =
            check_termination(world_, res.measures, episode_steps_, cfg_.episode);
        const bool terminal = end.has_value();
        StepDiagnostics diag = agent_.step(state_, choice.action, r, next.state, terminal, sched_);

        StepRecord rec;
        rec.step = sched_.step;
        rec.episode = episode_;
        rec.state = state_;
        rec.action = choice.action;
        rec.reward = r;
        rec.td_error = diag.td_error;
        rec.n_components = agent_.size();
        rec.measures = res.measures;
        current_.steps.push_back(rec);
        current_.total_distance += res.distance;
        if (on_step) {
            on_step(rec, diag);
        }

        sched_.advance(cfg_.agent);
        state_ = next.state;
        if (end) {
            current_.outcome = *end;
            log_.push_back(std::move(current_));
            current_ = EpisodeRecord{};
            episode_active_ = false;
            ++episode_;
        }
    }

    ExperimentConfig cfg_;
    std::vector<Scenario> scenarios_;
    DrivingAgent agent_;
    ScheduleState sched_;
    Streams streams_;
    std::uint64_t seed_ = 0;

    WorldState world_;
    StateVector state_{};
    bool episode_active_ = false;
    std::size_t scenario_index_ = 0;
    std::uint64_t episode_ = 0;
    std::size_t episode_steps_ = 0;
    EpisodeRecord current_;
    std::vector<EpisodeRecord> log_;
};

/// Mean reward per decision step over training steps [from, to).
inline double mean_reward(const std::vector<EpisodeRecord>& log, std::uint64_t from, std::uint64_t to) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const EpisodeRecord& ep : log) {
        for (const StepRecord& s : ep.steps) {
            if (s.step >= from && s.step < to) {
                sum += s.reward;
                ++n;
            }
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Greedy deployment of a frozen model; the agent is never modified.
inline std::vector<EpisodeRecord> evaluate(const DrivingAgent& agent, const ExperimentConfig& cfg,
                                           const NoiseConfig& noise, std::size_t episodes,
                                           std::uint64_t seed,
                                           const std::vector<Scenario>& scenarios = {
                                               kAllScenarios.begin(), kAllScenarios.end()}) {
    if (episodes == 0) {
        throw std::invalid_argument("evaluate: at least one episode is required");
    }
    if (scenarios.empty()) {
        throw std::invalid_argument("evaluate: no scenarios");
    }
    noise.validate();
    Streams streams = Streams::evaluation(seed);
    std::vector<EpisodeRecord> out;
    out.reserve(episodes);
    std::uint64_t global = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
        TrackSpec spec = cfg.track;
        spec.scenario = scenarios[e % scenarios.size()];
        WorldState world = build_track(spec, streams.track);
        EpisodeRecord ep;
        ep.scenario = spec.scenario;
        Observation obs = observe(world, cfg.camera, noise, streams.noise);
        for (std::size_t k = 0;; ++k) {
            const Action a = agent.greedy_action(obs.state);
            const DecisionResult res = drive(world, a, cfg.episode);
            const Observation next = observe(world, cfg.camera, noise, streams.noise);
            StepRecord rec;
            rec.step = global++;
            rec.episode = e;
            rec.state = obs.state;
            rec.action = a;
            rec.reward = reward_breakdown(res.measures, next.road_view,
                                          RewardConfig::from(cfg.agent)).total;
            rec.n_components = agent.size();
            rec.measures = res.measures;
            ep.steps.push_back(rec);
            ep.total_distance += res.distance;
            const auto end = check_termination(world, res.measures, k + 1, cfg.episode);
            if (end) {
                ep.outcome = *end;
                break;
            }
            obs = next;
        }
        out.push_back(std::move(ep));
    }
    return out;
}

}  // namespace brl
