#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "brl/core.hpp"
#include "brl/perception.hpp"
#include "brl/random.hpp"

namespace brl {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double k, Vec2 a) noexcept { return {k * a.x, k * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }
inline Vec2 unit(double angle) noexcept { return {std::cos(angle), std::sin(angle)}; }
/// 90 degrees counter-clockwise.
inline Vec2 left_of(Vec2 u) noexcept { return {-u.y, u.x}; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) noexcept {
    a = std::remainder(a, 2.0 * M_PI);
    return a <= -M_PI ? a + 2.0 * M_PI : a;
}

enum class Scenario : std::uint8_t { Straight, RightTurn, LeftTurn };

inline constexpr std::array<Scenario, 3> kAllScenarios{Scenario::Straight, Scenario::RightTurn,
                                                       Scenario::LeftTurn};

constexpr std::string_view to_string(Scenario s) noexcept {
    switch (s) {
        case Scenario::Straight: return "straight";
        case Scenario::RightTurn: return "right";
        case Scenario::LeftTurn: return "left";
    }
    return "?";
}

inline Scenario scenario_from_string(std::string_view s) {
    for (Scenario sc : kAllScenarios) {
        if (to_string(sc) == s) {
            return sc;
        }
    }
    throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

/// Circular obstacle. Dynamic obstacles travel around a circle of `orbit_radius` about
/// `center` with angular speed `orbit_speed`; static ones sit at `center`.
struct Obstacle {
    Vec2 center;
    double radius = 0.5;
    bool dynamic = false;
    double orbit_radius = 0.0;
    double orbit_speed = 0.0;
    double orbit_phase = 0.0;

    Vec2 position(double time) const noexcept {
        if (!dynamic || orbit_radius == 0.0) {
            return center;
        }
        return center + orbit_radius * unit(orbit_phase + orbit_speed * time);
    }

    friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

struct TrackSpec {
    Scenario scenario = Scenario::Straight;
    double lane_width = 5.0;
    double segment_length = 80.0;
    double curve_radius = 40.0;
    /// Painted width of the divider and edge markings. Wide on purpose: with the x20 line
    /// weight the markings then dominate the histograms, so lane position moves the state
    /// vector by more than the component-creation distance.
    double line_width = 0.6;
    std::vector<Obstacle> obstacles;
    /// Static roadside posts placed at random by build_track.
    std::size_t roadside_posts = 0;
    double lateral_jitter = 0.3;
    double heading_jitter = 0.05;
    /// Realized spawn perturbation (filled in by build_track).
    double spawn_offset = 0.0;
    double spawn_heading = 0.0;

    void validate() const;

    friend bool operator==(const TrackSpec&, const TrackSpec&) = default;
};

struct VehicleParams {
    double wheelbase = 2.5;
    double width = 1.8;
    double length = 4.2;
    double max_steer = 35.0 * M_PI / 180.0;
    double max_accel = 3.0;
    /// Linear drag; top speed at full throttle is max_accel / drag = 12 m/s.
    double drag = 0.25;
    double brake_decel = 6.0;

    friend bool operator==(const VehicleParams&, const VehicleParams&) = default;
};

struct VehicleState {
    Vec2 position;
    double heading = 0.0;
    double speed = 0.0;
    double wheelbase = 2.5;

    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlSignal {
    double steer = 0.0;
    double throttle = 0.0;
    double brake = 0.0;
    bool reverse = false;

    friend bool operator==(const ControlSignal&, const ControlSignal&) = default;
};

enum class CollisionKind : std::uint8_t { None, Static, Dynamic };

struct Measures {
    bool collision = false;
    CollisionKind collision_kind = CollisionKind::None;
    double offroad_fraction = 0.0;
    double otherlane_fraction = 0.0;
    double inlane_fraction = 1.0;
    double speed = 0.0;
    double distance_delta = 0.0;
    /// Arc-length progress and signed lateral offset (left positive) of the vehicle center.
    double progress = 0.0;
    double lateral = 0.0;

    friend bool operator==(const Measures&, const Measures&) = default;
};

/// Position of a point relative to the road centerline.
struct TrackPoint {
    double along = 0.0;
    double lateral = 0.0;
};

/// Straight line or circular arc making up part of the centerline.
struct TrackPiece {
    enum class Kind : std::uint8_t { Line, Arc } kind = Kind::Line;
    Vec2 start;
    double start_heading = 0.0;
    double length = 0.0;
    /// Signed curvature, left turns positive; 0 for lines.
    double curvature = 0.0;
    double s_offset = 0.0;
    bool open_before = false;
    bool open_after = false;

    Vec2 point_at(double t) const noexcept {
        if (kind == Kind::Line) {
            return start + t * unit(start_heading);
        }
        const Vec2 c = start + (1.0 / curvature) * left_of(unit(start_heading));
        const double phi = start_heading - M_PI / 2.0 + curvature * t;
        return c + (1.0 / curvature) * unit(phi);
    }

    double heading_at(double t) const noexcept { return start_heading + curvature * t; }

    /// Closest point parameter and squared distance.
    std::pair<double, double> closest(Vec2 p) const noexcept {
        double t = 0.0;
        if (kind == Kind::Line) {
            t = dot(p - start, unit(start_heading));
        } else {
            const double r = 1.0 / std::abs(curvature);
            const Vec2 c = start + (1.0 / curvature) * left_of(unit(start_heading));
            const Vec2 rel = p - c;
            const Vec2 from = start - c;
            // signed angle from the start radius toward p, measured in the travel direction
            const double ang = std::atan2(cross(from, rel), dot(from, rel));
            t = (curvature > 0.0 ? ang : -ang) * r;
            if (t < 0.0 || t > length) {
                const double wrapped = t < 0.0 ? t + 2.0 * M_PI * r : t - 2.0 * M_PI * r;
                const double d_lo = std::min(std::abs(t), std::abs(wrapped));
                const double d_hi = std::min(std::abs(t - length), std::abs(wrapped - length));
                t = d_lo <= d_hi ? 0.0 : length;
            }
        }
        if (!open_before) {
            t = std::max(t, 0.0);
        }
        if (!open_after) {
            t = std::min(t, length);
        }
        const Vec2 q = point_at(t);
        const Vec2 d = p - q;
        return {t, dot(d, d)};
    }

    friend bool operator==(const TrackPiece&, const TrackPiece&) = default;
};

/// Built road: centerline pieces, lane geometry, and obstacles.
struct Track {
    TrackSpec spec;
    std::vector<TrackPiece> pieces;
    double total_length = 0.0;

    TrackPoint locate(Vec2 p) const noexcept {
        double best_d2 = std::numeric_limits<double>::infinity();
        TrackPoint out;
        for (const TrackPiece& piece : pieces) {
            const auto [t, d2] = piece.closest(p);
            if (d2 < best_d2) {
                best_d2 = d2;
                const Vec2 tangent = unit(piece.heading_at(t));
                const double side = cross(tangent, p - piece.point_at(t));
                out.along = piece.s_offset + t;
                out.lateral = side >= 0.0 ? std::sqrt(d2) : -std::sqrt(d2);
            }
        }
        return out;
    }

    Vec2 point_at(double along) const noexcept {
        for (const TrackPiece& piece : pieces) {
            if (along <= piece.s_offset + piece.length || &piece == &pieces.back()) {
                return piece.point_at(along - piece.s_offset);
            }
        }
        return {};
    }

    double heading_at(double along) const noexcept {
        for (const TrackPiece& piece : pieces) {
            if (along <= piece.s_offset + piece.length || &piece == &pieces.back()) {
                return piece.heading_at(std::clamp(along - piece.s_offset, 0.0, piece.length));
            }
        }
        return 0.0;
    }

    /// Centerline arc length of the curved pieces.
    double arc_length() const noexcept {
        double out = 0.0;
        for (const TrackPiece& piece : pieces) {
            out += piece.kind == TrackPiece::Kind::Arc ? piece.length : 0.0;
        }
        return out;
    }

    friend bool operator==(const Track&, const Track&) = default;
};

inline void TrackSpec::validate() const {
    const VehicleParams vp;
    if (!(lane_width > vp.width)) {
        throw ConfigError("track.lane_width", "must exceed the vehicle width");
    }
    if (!(curve_radius > lane_width)) {
        throw ConfigError("track.curve_radius", "must exceed the lane width");
    }
    if (!(segment_length > 0.0)) {
        throw ConfigError("track.segment_length", "must be positive");
    }
    if (!(line_width > 0.0 && line_width < lane_width)) {
        throw ConfigError("track.line_width", "must be positive and narrower than a lane");
    }
    if (!(lateral_jitter >= 0.0) || !(heading_jitter >= 0.0)) {
        throw ConfigError("track.lateral_jitter", "jitter must be non-negative");
    }
    for (const Obstacle& o : obstacles) {
        if (!(o.radius > 0.0)) {
            throw ConfigError("track.obstacles", "radius must be positive");
        }
    }
}

struct WorldState {
    Track track;
    VehicleParams params;
    VehicleState vehicle;
    double time = 0.0;

    friend bool operator==(const WorldState&, const WorldState&) = default;
};

inline constexpr double kDefaultTickDt = 1.0 / 7.0;

/// Deterministic track geometry from a fully realized spec.
inline Track make_track(const TrackSpec& spec) {
    spec.validate();
    Track track;
    track.spec = spec;
    const Vec2 origin{0.0, 0.0};
    if (spec.scenario == Scenario::Straight) {
        TrackPiece line;
        line.start = origin;
        line.length = spec.segment_length;
        line.open_before = true;
        line.open_after = true;
        track.pieces.push_back(line);
    } else {
        const double half = spec.segment_length / 2.0;
        const double sign = spec.scenario == Scenario::LeftTurn ? 1.0 : -1.0;
        TrackPiece lead;
        lead.start = origin;
        lead.length = half;
        lead.open_before = true;
        TrackPiece arc;
        arc.kind = TrackPiece::Kind::Arc;
        arc.start = lead.point_at(half);
        arc.start_heading = 0.0;
        arc.curvature = sign / spec.curve_radius;
        arc.length = spec.curve_radius * M_PI / 2.0;
        arc.s_offset = half;
        TrackPiece out;
        out.start = arc.point_at(arc.length);
        out.start_heading = arc.heading_at(arc.length);
        out.length = half;
        out.s_offset = half + arc.length;
        out.open_after = true;
        track.pieces = {lead, arc, out};
    }
    for (const TrackPiece& p : track.pieces) {
        track.total_length += p.length;
    }
    return track;
}

/// Spawns the vehicle at the track start, in the right-hand lane, heading along the road.
inline WorldState make_world(const TrackSpec& spec, const VehicleParams& params = {}) {
    WorldState w;
    w.track = make_track(spec);
    w.params = params;
    const double lateral = -spec.lane_width / 2.0 + spec.spawn_offset;
    const double along = params.length / 2.0;
    const TrackPiece& first = w.track.pieces.front();
    const Vec2 base = first.point_at(along);
    w.vehicle.position = base + lateral * left_of(unit(first.heading_at(along)));
    w.vehicle.heading = wrap_angle(first.heading_at(along) + spec.spawn_heading);
    w.vehicle.speed = 0.0;
    w.vehicle.wheelbase = params.wheelbase;
    return w;
}

/// Realizes the random parts of `spec` (spawn jitter, roadside posts) and builds the world.
inline WorldState build_track(const TrackSpec& spec, Rng& rng, const VehicleParams& params = {}) {
    spec.validate();
    TrackSpec realized = spec;
    realized.spawn_offset = rng.uniform(-spec.lateral_jitter, spec.lateral_jitter);
    realized.spawn_heading = rng.uniform(-spec.heading_jitter, spec.heading_jitter);
    realized.roadside_posts = 0;
    const Track geometry = make_track(realized);
    for (std::size_t i = 0; i < spec.roadside_posts; ++i) {
        const double along = rng.uniform(15.0, geometry.total_length);
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double offset = spec.lane_width + rng.uniform(1.5, 3.0);
        const Vec2 base = geometry.point_at(along);
        Obstacle post;
        post.center = base + side * offset * left_of(unit(geometry.heading_at(along)));
        post.radius = 0.4;
        realized.obstacles.push_back(post);
    }
    return make_world(realized, params);
}

/// Discrete action primitive to actuator command.
constexpr ControlSignal apply_action(Action a) noexcept {
    switch (a) {
        case Action::Forward: return {0.0, 0.6, 0.0, false};
        case Action::TurnRight: return {0.5, 0.4, 0.0, false};
        case Action::TurnLeft: return {-0.5, 0.4, 0.0, false};
        case Action::Backward: return {0.0, 0.4, 0.0, true};
    }
    return {};
}

/// The vehicle rectangle is sampled on this grid (cell centers) for lane-occupancy fractions.
inline constexpr std::size_t kFootprintLong = 14;
inline constexpr std::size_t kFootprintLat = 6;

/// Fills offroad/otherlane/inlane fractions from where the footprint samples fall.
inline void footprint_fractions(const WorldState& w, Measures& m) {
    const Vec2 fwd = unit(w.vehicle.heading);
    const Vec2 left = left_of(fwd);
    const double lane = w.track.spec.lane_width;
    std::size_t off = 0;
    std::size_t other = 0;
    for (std::size_t i = 0; i < kFootprintLong; ++i) {
        const double a = ((static_cast<double>(i) + 0.5) / kFootprintLong - 0.5) * w.params.length;
        for (std::size_t j = 0; j < kFootprintLat; ++j) {
            const double b = ((static_cast<double>(j) + 0.5) / kFootprintLat - 0.5) * w.params.width;
            const Vec2 p = w.vehicle.position + a * fwd + b * left;
            const double lat = w.track.locate(p).lateral;
            if (std::abs(lat) > lane) {
                ++off;
            } else if (lat > 0.0) {
                ++other;
            }
        }
    }
    const double n = static_cast<double>(kFootprintLong * kFootprintLat);
    m.offroad_fraction = static_cast<double>(off) / n;
    m.otherlane_fraction = static_cast<double>(other) / n;
    m.inlane_fraction = static_cast<double>(kFootprintLong * kFootprintLat - off - other) / n;
}

/// Circle against the vehicle rectangle.
inline bool overlaps(const VehicleState& v, const VehicleParams& p, Vec2 center, double radius) {
    const Vec2 rel = center - v.position;
    const Vec2 fwd = unit(v.heading);
    const double a = dot(rel, fwd);
    const double b = dot(rel, left_of(fwd));
    const double ca = std::clamp(a, -p.length / 2.0, p.length / 2.0);
    const double cb = std::clamp(b, -p.width / 2.0, p.width / 2.0);
    const double da = a - ca;
    const double db = b - cb;
    return da * da + db * db < radius * radius;
}

/// Advances speed and pose by one kinematic bicycle step and reports the resulting measures.
inline Measures tick(WorldState& w, const ControlSignal& control, double dt = kDefaultTickDt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("tick: dt must be positive");
    }
    const VehicleParams& p = w.params;
    VehicleState& v = w.vehicle;
    const double steer = std::clamp(control.steer, -1.0, 1.0);
    const double throttle = std::clamp(control.throttle, 0.0, 1.0);
    const double brake = std::clamp(control.brake, 0.0, 1.0);

    const double drive = (control.reverse ? -1.0 : 1.0) * p.max_accel * throttle;
    double speed = v.speed + (drive - p.drag * v.speed) * dt;
    if (brake > 0.0) {
        const double cut = p.brake_decel * brake * dt;
        speed = speed > 0.0 ? std::max(0.0, speed - cut) : std::min(0.0, speed + cut);
    }
    v.speed = speed;

    const double ds = speed * dt;
    // positive steer turns right, i.e. clockwise
    const double curvature = -std::tan(steer * p.max_steer) / v.wheelbase;
    if (curvature == 0.0) {
        v.position = v.position + ds * unit(v.heading);
    } else {
        const double dtheta = curvature * ds;
        v.position.x += (std::sin(v.heading + dtheta) - std::sin(v.heading)) / curvature;
        v.position.y -= (std::cos(v.heading + dtheta) - std::cos(v.heading)) / curvature;
        v.heading = wrap_angle(v.heading + dtheta);
    }
    w.time += dt;

    Measures m;
    m.speed = v.speed;
    m.distance_delta = std::abs(ds);
    const TrackPoint tp = w.track.locate(v.position);
    m.progress = tp.along;
    m.lateral = tp.lateral;
    footprint_fractions(w, m);
    for (const Obstacle& o : w.track.spec.obstacles) {
        if (overlaps(v, p, o.position(w.time), o.radius)) {
            m.collision = true;
            m.collision_kind = o.dynamic ? CollisionKind::Dynamic : CollisionKind::Static;
            break;
        }
    }
    return m;
}

/// Camera footprint: ground trapezoid in front of the bumper.
struct CameraSpec {
    std::size_t width = kDefaultMapWidth;
    std::size_t height = kDefaultMapHeight;
    double near_distance = 1.0;
    double far_distance = 20.0;
    double near_lanes = 1.5;
    double far_lanes = 4.0;

    void validate() const {
        if (width == 0 || width % 3 != 0 || height == 0 || height % 2 != 0) {
            throw ConfigError("camera.width", "width must be a multiple of 3 and height of 2");
        }
        if (!(near_distance >= 0.0 && far_distance > near_distance)) {
            throw ConfigError("camera.far_distance", "must exceed near_distance >= 0");
        }
        if (!(near_lanes > 0.0 && far_lanes > 0.0)) {
            throw ConfigError("camera.near_lanes", "view widths must be positive");
        }
    }

    friend bool operator==(const CameraSpec&, const CameraSpec&) = default;
};

inline SemanticClass classify_ground(const WorldState& w, Vec2 g) {
    for (const Obstacle& o : w.track.spec.obstacles) {
        const Vec2 d = g - o.position(w.time);
        if (dot(d, d) <= o.radius * o.radius) {
            return o.dynamic ? SemanticClass::DynamicObject : SemanticClass::StaticObject;
        }
    }
    const double lane = w.track.spec.lane_width;
    const double lat = w.track.locate(g).lateral;
    const double half_line = w.track.spec.line_width / 2.0;
    if (std::abs(lat) <= half_line || std::abs(std::abs(lat) - lane) <= half_line) {
        return SemanticClass::RoadLine;
    }
    return std::abs(lat) <= lane ? SemanticClass::Road : SemanticClass::OffRoad;
}

/// Top-down semantic view of the ground ahead. Rows run far (top) to near (bottom); columns
/// run left to right.
inline SemanticMap render_semantic(const WorldState& w, const CameraSpec& cam = {}) {
    SemanticMap map(cam.width, cam.height, SemanticClass::OffRoad);
    const Vec2 fwd = unit(w.vehicle.heading);
    const Vec2 left = left_of(fwd);
    const Vec2 eye = w.vehicle.position + (w.params.length / 2.0) * fwd;
    const double lane = w.track.spec.lane_width;
    const auto W = static_cast<double>(cam.width);
    const auto H = static_cast<double>(cam.height);
    for (std::size_t row = 0; row < cam.height; ++row) {
        const double frac = (static_cast<double>(row) + 0.5) / H;
        const double dist = cam.far_distance - frac * (cam.far_distance - cam.near_distance);
        const double span_frac = (dist - cam.near_distance) / (cam.far_distance - cam.near_distance);
        const double span = lane * (cam.near_lanes + span_frac * (cam.far_lanes - cam.near_lanes));
        const Vec2 centre = eye + dist * fwd;
        for (std::size_t col = 0; col < cam.width; ++col) {
            const double offset =
                (W - 1.0 - 2.0 * static_cast<double>(col)) / (2.0 * W) * span;
            map.at(row, col) = classify_ground(w, centre + offset * left);
        }
    }
    return map;
}

struct RewardConfig {
    std::array<double, 5> coeffs{50.0, 40.0, 30.0, 15.0, 10.0};
    double v_target = 8.0;

    static RewardConfig from(const AgentConfig& cfg) { return {cfg.reward_coeffs, cfg.v_target}; }

    friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

enum class RewardBranch : std::uint8_t { Collision, OffRoad, OppositeLane, Speed };

struct RewardBreakdown {
    RewardBranch branch = RewardBranch::Speed;
    double base = 0.0;
    double road_view = 0.0;
    double total = 0.0;
};

/// Target-speed term; a standing vehicle is penalized like a slow one.
inline double speed_reward(double v, const RewardConfig& cfg) {
    const double rel = (v - cfg.v_target) / cfg.v_target;
    if (v < 0.0) {
        return -cfg.coeffs[3] * rel * rel;
    }
    if (v < cfg.v_target) {
        return -cfg.coeffs[4] * rel * rel;
    }
    return 0.0;
}

/// Collision > off-road > opposite lane > speed; exactly one branch applies, then the
/// visible-road fraction is added.
inline RewardBreakdown reward_breakdown(const Measures& m, double view, const RewardConfig& cfg) {
    RewardBreakdown out;
    if (m.collision) {
        out.branch = RewardBranch::Collision;
        out.base = -cfg.coeffs[0];
    } else if (m.offroad_fraction > 0.0) {
        out.branch = RewardBranch::OffRoad;
        out.base = -cfg.coeffs[1] * m.offroad_fraction;
    } else if (m.otherlane_fraction > 0.0) {
        out.branch = RewardBranch::OppositeLane;
        out.base = -cfg.coeffs[2] * m.otherlane_fraction;
    } else {
        out.branch = RewardBranch::Speed;
        out.base = speed_reward(m.speed, cfg);
    }
    out.road_view = view;
    out.total = out.base + view;
    return out;
}

inline double reward(const Measures& m, const SemanticMap& map, const RewardConfig& cfg) {
    return reward_breakdown(m, road_view(map), cfg).total;
}

}  // namespace brl
