#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "brl/agent.hpp"
#include "brl/core.hpp"
#include "brl/evalkit.hpp"
#include "brl/perception.hpp"
#include "brl/simworld.hpp"

// JSON mappings for everything a checkpoint carries. Reals go through nlohmann's
// shortest round-trip formatting, so a save/load cycle reproduces them bit for bit.

namespace brl {

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointFormat = "brl-checkpoint";

template <std::size_t Dim>
json vec_to_json(const Vec<Dim>& v) {
    return json(std::vector<double>(v.begin(), v.end()));
}

template <std::size_t Dim>
Vec<Dim> vec_from_json(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != Dim) {
        throw ConfigError(field, "expected an array of " + std::to_string(Dim) + " numbers");
    }
    Vec<Dim> out{};
    for (std::size_t d = 0; d < Dim; ++d) {
        out[d] = j[d].get<double>();
    }
    return out;
}

inline json to_json(const Obstacle& o) {
    return json{{"x", o.center.x},
                {"y", o.center.y},
                {"radius", o.radius},
                {"dynamic", o.dynamic},
                {"orbit_radius", o.orbit_radius},
                {"orbit_speed", o.orbit_speed},
                {"orbit_phase", o.orbit_phase}};
}

inline Obstacle obstacle_from_json(const json& j) {
    Obstacle o;
    o.center = {j.at("x").get<double>(), j.at("y").get<double>()};
    o.radius = j.value("radius", 0.5);
    o.dynamic = j.value("dynamic", false);
    o.orbit_radius = j.value("orbit_radius", 0.0);
    o.orbit_speed = j.value("orbit_speed", 0.0);
    o.orbit_phase = j.value("orbit_phase", 0.0);
    return o;
}

inline json to_json(const TrackSpec& s) {
    json obstacles = json::array();
    for (const Obstacle& o : s.obstacles) {
        obstacles.push_back(to_json(o));
    }
    return json{{"scenario", std::string(to_string(s.scenario))},
                {"lane_width", s.lane_width},
                {"segment_length", s.segment_length},
                {"curve_radius", s.curve_radius},
                {"line_width", s.line_width},
                {"roadside_posts", s.roadside_posts},
                {"lateral_jitter", s.lateral_jitter},
                {"heading_jitter", s.heading_jitter},
                {"spawn_offset", s.spawn_offset},
                {"spawn_heading", s.spawn_heading},
                {"obstacles", obstacles}};
}

/// Overlays the keys present in `j` onto `base`.
inline TrackSpec track_spec_from_json(const json& j, TrackSpec base = {}) {
    if (!j.is_object()) {
        throw ConfigError("track", "expected an object");
    }
    detail::reject_unknown(j,
                           {"scenario", "lane_width", "segment_length", "curve_radius",
                            "line_width", "roadside_posts", "lateral_jitter", "heading_jitter", "spawn_offset",
                            "spawn_heading", "obstacles"},
                           "track.");
    try {
        if (j.contains("scenario")) {
            base.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        }
        base.lane_width = detail::read_number(j, "lane_width", "track.", base.lane_width);
        base.segment_length = detail::read_number(j, "segment_length", "track.", base.segment_length);
        base.curve_radius = detail::read_number(j, "curve_radius", "track.", base.curve_radius);
        base.line_width = detail::read_number(j, "line_width", "track.", base.line_width);
        base.roadside_posts = j.value("roadside_posts", base.roadside_posts);
        base.lateral_jitter = detail::read_number(j, "lateral_jitter", "track.", base.lateral_jitter);
        base.heading_jitter = detail::read_number(j, "heading_jitter", "track.", base.heading_jitter);
        base.spawn_offset = detail::read_number(j, "spawn_offset", "track.", base.spawn_offset);
        base.spawn_heading = detail::read_number(j, "spawn_heading", "track.", base.spawn_heading);
        if (j.contains("obstacles")) {
            base.obstacles.clear();
            for (const json& o : j.at("obstacles")) {
                base.obstacles.push_back(obstacle_from_json(o));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError("track", e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("track.scenario", e.what());
    }
    base.validate();
    return base;
}

inline json to_json(const NoiseConfig& n) {
    return json{{"flip_prob", n.flip_prob}, {"blob_rate", n.blob_rate}, {"blob_size", n.blob_size}};
}

inline NoiseConfig noise_from_json(const json& j, NoiseConfig base = {}) {
    if (!j.is_object()) {
        throw ConfigError("noise", "expected an object");
    }
    detail::reject_unknown(j, {"flip_prob", "blob_rate", "blob_size"}, "noise.");
    base.flip_prob = detail::read_number(j, "flip_prob", "noise.", base.flip_prob);
    base.blob_rate = detail::read_number(j, "blob_rate", "noise.", base.blob_rate);
    if (j.contains("blob_size")) {
        if (!j.at("blob_size").is_number_integer() || j.at("blob_size").get<std::int64_t>() <= 0) {
            throw ConfigError("noise.blob_size", "expected a positive integer");
        }
        base.blob_size = j.at("blob_size").get<std::size_t>();
    }
    base.validate();
    return base;
}

inline json to_json(const CameraSpec& c) {
    return json{{"width", c.width},
                {"height", c.height},
                {"near_distance", c.near_distance},
                {"far_distance", c.far_distance},
                {"near_lanes", c.near_lanes},
                {"far_lanes", c.far_lanes}};
}

inline CameraSpec camera_from_json(const json& j, CameraSpec base = {}) {
    if (!j.is_object()) {
        throw ConfigError("camera", "expected an object");
    }
    detail::reject_unknown(
        j, {"width", "height", "near_distance", "far_distance", "near_lanes", "far_lanes"}, "camera.");
    for (const char* key : {"width", "height"}) {
        if (j.contains(key) &&
            (!j.at(key).is_number_integer() || j.at(key).get<std::int64_t>() <= 0)) {
            throw ConfigError(std::string("camera.") + key, "expected a positive integer");
        }
    }
    base.width = j.value("width", base.width);
    base.height = j.value("height", base.height);
    base.near_distance = detail::read_number(j, "near_distance", "camera.", base.near_distance);
    base.far_distance = detail::read_number(j, "far_distance", "camera.", base.far_distance);
    base.near_lanes = detail::read_number(j, "near_lanes", "camera.", base.near_lanes);
    base.far_lanes = detail::read_number(j, "far_lanes", "camera.", base.far_lanes);
    base.validate();
    return base;
}

inline json to_json(const VehicleState& v) {
    return json{{"x", v.position.x},
                {"y", v.position.y},
                {"heading", v.heading},
                {"speed", v.speed},
                {"wheelbase", v.wheelbase}};
}

inline VehicleState vehicle_from_json(const json& j) {
    VehicleState v;
    v.position = {j.at("x").get<double>(), j.at("y").get<double>()};
    v.heading = j.at("heading").get<double>();
    v.speed = j.at("speed").get<double>();
    v.wheelbase = j.at("wheelbase").get<double>();
    return v;
}

inline json to_json(const WorldState& w) {
    return json{{"track", to_json(w.track.spec)}, {"vehicle", to_json(w.vehicle)}, {"time", w.time}};
}

inline WorldState world_from_json(const json& j) {
    WorldState w = make_world(track_spec_from_json(j.at("track")));
    w.vehicle = vehicle_from_json(j.at("vehicle"));
    w.time = j.at("time").get<double>();
    return w;
}

inline json to_json(const ScheduleState& s) {
    return json{{"alpha", s.alpha}, {"tau", s.tau}, {"rho", s.rho}, {"step", s.step}};
}

inline ScheduleState schedule_state_from_json(const json& j) {
    return {j.at("alpha").get<double>(), j.at("tau").get<double>(), j.at("rho").get<double>(),
            j.at("step").get<std::uint64_t>()};
}

/// Mixture prior, components and Q rows.
template <std::size_t Dim>
json model_to_json(const Agent<Dim>& agent) {
    const NigPrior<Dim>& p = agent.mixture().prior();
    json components = json::array();
    for (const Component<Dim>& c : agent.mixture().components()) {
        components.push_back(
            json{{"count", c.count}, {"mean", vec_to_json(c.mean)}, {"scatter", vec_to_json(c.scatter)}});
    }
    json q = json::array();
    for (const QTable::Row& row : agent.q().data()) {
        q.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return json{{"prior",
                 {{"mean", vec_to_json(p.mean)},
                  {"kappa", p.kappa},
                  {"dof", p.dof},
                  {"scale", vec_to_json(p.scale)}}},
                {"components", components},
                {"q", q}};
}

template <std::size_t Dim>
Agent<Dim> model_from_json(const json& j, const AgentConfig& cfg) {
    const json& pj = j.at("prior");
    NigPrior<Dim> prior;
    prior.mean = vec_from_json<Dim>(pj.at("mean"), "model.prior.mean");
    prior.kappa = pj.at("kappa").get<double>();
    prior.dof = pj.at("dof").get<double>();
    prior.scale = vec_from_json<Dim>(pj.at("scale"), "model.prior.scale");
    Agent<Dim> agent(cfg, prior);
    const json& comps = j.at("components");
    const json& q = j.at("q");
    if (comps.size() != q.size()) {
        throw ConfigError("model.q", "row count differs from component count");
    }
    for (std::size_t m = 0; m < comps.size(); ++m) {
        Component<Dim> c;
        c.count = comps[m].at("count").get<double>();
        c.mean = vec_from_json<Dim>(comps[m].at("mean"), "model.components.mean");
        c.scatter = vec_from_json<Dim>(comps[m].at("scatter"), "model.components.scatter");
        if (!q[m].is_array() || q[m].size() != kActionCount) {
            throw ConfigError("model.q", "each row needs one value per action");
        }
        QTable::Row row{};
        for (std::size_t a = 0; a < kActionCount; ++a) {
            row[a] = q[m][a].get<double>();
        }
        agent.push_component(c, row);
    }
    return agent;
}

}  // namespace brl
