#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "brl/core.hpp"
#include "brl/mixture.hpp"
#include "brl/random.hpp"

namespace brl {

using ActionDistribution = std::array<double, kActionCount>;

/// Q = [q_{m,a}]: one row per mixture component (creation order), one column per action.
class QTable {
public:
    using Row = std::array<double, kActionCount>;

    std::size_t rows() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    void add_row(const Row& row = Row{}) { rows_.push_back(row); }

    double at(ComponentId m, Action a) const {
        check(m);
        return rows_[m][index(a)];
    }

    double& at(ComponentId m, Action a) {
        check(m);
        return rows_[m][index(a)];
    }

    const Row& row(ComponentId m) const {
        check(m);
        return rows_[m];
    }

    const std::vector<Row>& data() const noexcept { return rows_; }

    double min() const {
        if (rows_.empty()) {
            throw std::logic_error("QTable::min: table is empty");
        }
        double out = std::numeric_limits<double>::infinity();
        for (const Row& r : rows_) {
            for (double q : r) {
                out = std::min(out, q);
            }
        }
        return out;
    }

    friend bool operator==(const QTable&, const QTable&) = default;

private:
    void check(ComponentId m) const {
        if (m >= rows_.size()) {
            throw std::out_of_range("QTable: unknown row " + std::to_string(m));
        }
    }

    std::vector<Row> rows_;
};

/// Shift that makes every entry of Q non-negative: |min Q| / (1 + |min Q|) - min Q.
inline double q_offset(const QTable& q) {
    const double lo = q.min();
    const double mag = std::abs(lo);
    return mag / (1.0 + mag) - lo;
}

/// Normalizes `masses` in place. All-zero (or non-finite) totals fall back to uniform and
/// return false.
template <class Range>
bool normalize_or_uniform(Range& masses) {
    double total = 0.0;
    for (double v : masses) {
        total += v;
    }
    const std::size_t n = std::size(masses);
    if (!(total > 0.0) || !std::isfinite(total)) {
        for (double& v : masses) {
            v = 1.0 / static_cast<double>(n);
        }
        return false;
    }
    for (double& v : masses) {
        v /= total;
    }
    return true;
}

/// p(m | a) for every component: column `a` of Q shifted by the offset, normalized over m.
inline std::vector<double> component_given_action(const QTable& q, Action a) {
    const double off = q_offset(q);
    std::vector<double> col(q.rows());
    for (ComponentId m = 0; m < q.rows(); ++m) {
        col[m] = q.at(m, a) + off;
    }
    normalize_or_uniform(col);
    return col;
}

/// p(a): offset column sums of Q normalized over actions.
inline ActionDistribution action_prior(const QTable& q) {
    const double off = q_offset(q);
    ActionDistribution p{};
    for (ComponentId m = 0; m < q.rows(); ++m) {
        for (std::size_t a = 0; a < kActionCount; ++a) {
            p[a] += q.data()[m][a] + off;
        }
    }
    normalize_or_uniform(p);
    return p;
}

/// p(m): offset row sums of Q normalized over components.
inline std::vector<double> component_prior(const QTable& q) {
    const double off = q_offset(q);
    std::vector<double> p(q.rows(), 0.0);
    for (ComponentId m = 0; m < q.rows(); ++m) {
        for (double v : q.data()[m]) {
            p[m] += v + off;
        }
    }
    normalize_or_uniform(p);
    return p;
}

/// Exploration distribution: (1 - tau) / |A| everywhere plus tau on the greedy action.
inline ActionDistribution behavior_distribution(Action greedy, double tau) {
    ActionDistribution p{};
    const double base = (1.0 - tau) / static_cast<double>(kActionCount);
    p.fill(base);
    p[index(greedy)] += tau;
    return p;
}

/// Lowest-index maximum, i.e. ties resolve Forward < TurnRight < TurnLeft < Backward.
inline Action argmax_action(const ActionDistribution& p) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < kActionCount; ++a) {
        if (p[a] > p[best]) {
            best = a;
        }
    }
    return action_from_index(best);
}

inline Action sample_action(const ActionDistribution& p, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t a = 0; a < kActionCount; ++a) {
        acc += p[a];
        if (u < acc) {
            return action_from_index(a);
        }
    }
    // rounding left u above the cumulative total; take the last action with mass
    for (std::size_t a = kActionCount; a-- > 0;) {
        if (p[a] > 0.0) {
            return action_from_index(a);
        }
    }
    return Action::Forward;
}

enum class WeightCase { Upper, Lower, Middle };

constexpr std::string_view to_string(WeightCase c) noexcept {
    switch (c) {
        case WeightCase::Upper: return "upper";
        case WeightCase::Lower: return "lower";
        case WeightCase::Middle: return "middle";
    }
    return "?";
}

struct UpdateWeight {
    double w = 0.0;
    WeightCase which = WeightCase::Middle;
};

struct ActionChoice {
    Action action = Action::Forward;
    Action greedy = Action::Forward;
    ActionDistribution distribution{};
};

struct StepDiagnostics {
    double reward = 0.0;
    double td_error = 0.0;
    WeightCase weight_case = WeightCase::Middle;
    double weight = 0.0;
    std::optional<ComponentId> created_component;
    Action chosen_action = Action::Forward;
    Action greedy_action = Action::Forward;
    Action next_action = Action::Forward;
    ComponentId m_t = 0;
    ComponentId m_next = 0;
    double d_t = 0.0;

    friend bool operator==(const StepDiagnostics&, const StepDiagnostics&) = default;
};

/// Bayesian mixture Q-learning agent.
///
/// The mixture models the perceptual space, the Q table ties each component to action
/// values, and all action / component posteriors follow from the two. Likelihoods are
/// handled in log space and shifted by their maximum before exponentiation.
template <std::size_t Dim = kStateDim>
class Agent {
public:
    using State = Vec<Dim>;

    Agent() : Agent(AgentConfig{}) {}
    explicit Agent(AgentConfig cfg)
        : cfg_(std::move(cfg)), mixture_(NigPrior<Dim>::from_config(cfg_.prior)) {}
    Agent(AgentConfig cfg, NigPrior<Dim> prior) : cfg_(std::move(cfg)), mixture_(std::move(prior)) {}

    const AgentConfig& config() const noexcept { return cfg_; }
    const Mixture<Dim>& mixture() const noexcept { return mixture_; }
    const QTable& q() const noexcept { return q_; }
    QTable& q() noexcept { return q_; }
    std::size_t size() const noexcept { return mixture_.size(); }

    /// Creates the first component at the initial state when the model is still empty.
    void bootstrap(const State& s0) {
        if (mixture_.empty()) {
            create_component(s0);
        }
    }

    /// New component centered on `s` with a zero Q row.
    ComponentId create_component(const State& s) {
        const ComponentId id = mixture_.create_component(s);
        q_.add_row();
        return id;
    }

    /// Restores a component with its Q row (checkpoints, fixtures).
    ComponentId push_component(const Component<Dim>& c, const QTable::Row& row) {
        const ComponentId id = mixture_.push_component(c);
        q_.add_row(row);
        return id;
    }

    /// exp(log p(s|m) - max_m log p(s|m)).
    std::vector<double> likelihood_weights(const State& s) const {
        require_nonempty();
        std::vector<double> w = mixture_.logliks(s);
        const double top = *std::max_element(w.begin(), w.end());
        for (double& v : w) {
            v = std::exp(v - top);
        }
        return w;
    }

    /// p(a | s) proportional to p(a) * sum_m p(s|m) p(m|a).
    ActionDistribution action_posterior(const State& s) const {
        return action_posterior_from(likelihood_weights(s));
    }

    Action greedy_action(const State& s) const { return argmax_action(action_posterior(s)); }

    /// p(m | a, s) proportional to p(s|m) p(m|a).
    std::vector<double> component_posterior(const State& s, Action a) const {
        const std::vector<double> lik = likelihood_weights(s);
        const std::vector<double> col = component_given_action(q_, a);
        std::vector<double> out(lik.size());
        for (std::size_t m = 0; m < out.size(); ++m) {
            out[m] = lik[m] * col[m];
        }
        if (!normalize_or_uniform(out)) {
            out = lik;
            normalize_or_uniform(out);
        }
        return out;
    }

    /// p(m | not a, s) proportional to p(s|m) (1 - p(m|a)).
    std::vector<double> component_posterior_not(const State& s, Action a) const {
        const std::vector<double> lik = likelihood_weights(s);
        const std::vector<double> col = component_given_action(q_, a);
        std::vector<double> out(lik.size());
        for (std::size_t m = 0; m < out.size(); ++m) {
            out[m] = lik[m] * (1.0 - col[m]);
        }
        normalize_or_uniform(out);
        return out;
    }

    /// p(m | s) proportional to p(s|m) p(m), with p(m) from the offset row sums of Q.
    std::vector<double> component_marginal(const State& s) const {
        const std::vector<double> lik = likelihood_weights(s);
        const std::vector<double> prior = component_prior(q_);
        std::vector<double> out(lik.size());
        for (std::size_t m = 0; m < out.size(); ++m) {
            out[m] = lik[m] * prior[m];
        }
        normalize_or_uniform(out);
        return out;
    }

    /// r + gamma * Q[m_next, a_next] - Q[m_t, a_t]; the bootstrap term is dropped at terminals.
    double td_error(double r, Action a_t, ComponentId m_t, Action a_next, ComponentId m_next,
                    bool terminal) const {
        const double current = q_.at(m_t, a_t);
        const double next = q_.at(m_next, a_next);
        return terminal ? r - current : r + cfg_.gamma * next - current;
    }

    WeightCase weight_case(double td) const noexcept {
        if (td > cfg_.t_upper) {
            return WeightCase::Upper;
        }
        return td < cfg_.t_lower ? WeightCase::Lower : WeightCase::Middle;
    }

    UpdateWeight update_weight(double td, const State& s, Action a_t, ComponentId m_t) const {
        switch (weight_case(td)) {
            case WeightCase::Upper:
                return {component_posterior(s, a_t).at(m_t), WeightCase::Upper};
            case WeightCase::Lower:
                return {component_posterior_not(s, a_t).at(m_t), WeightCase::Lower};
            case WeightCase::Middle:
                break;
        }
        return {component_marginal(s).at(m_t), WeightCase::Middle};
    }

    void q_update(ComponentId m_t, Action a_t, double alpha, double w, double td) {
        q_.at(m_t, a_t) += alpha * w * td;
    }

    /// Greedy action under p(a|s), then a draw from the tau-tempered behavior distribution.
    ActionChoice select_action(const State& s, double tau, Rng& rng) const {
        if (!(tau >= 0.0 && tau <= 1.0)) {
            throw std::invalid_argument("select_action: tau must lie in [0, 1]");
        }
        ActionChoice out;
        out.greedy = greedy_action(s);
        out.distribution = behavior_distribution(out.greedy, tau);
        out.action = sample_action(out.distribution, rng);
        return out;
    }

    /// One learning step on the transition (s_t, a_t, r_t, s_next).
    ///
    /// The transition updates the nearest component and its Q cell when s_t is close to it
    /// (d_t < rho) or the outcome was not bad (td > T_l); otherwise a new component is
    /// created at s_t and Q is left untouched.
    StepDiagnostics step(const State& s_t, Action a_t, double r_t, const State& s_next,
                         bool terminal, const ScheduleState& sched) {
        require_nonempty();
        StepDiagnostics diag;
        diag.reward = r_t;
        diag.chosen_action = a_t;
        diag.greedy_action = greedy_action(s_t);

        const std::vector<double> lik_next = likelihood_weights(s_next);
        diag.next_action = argmax_action(action_posterior_from(lik_next));
        {
            const std::vector<double> col = component_given_action(q_, diag.next_action);
            std::size_t best = 0;
            double best_p = -1.0;
            for (std::size_t m = 0; m < col.size(); ++m) {
                const double p = lik_next[m] * col[m];
                if (p > best_p) {
                    best = m;
                    best_p = p;
                }
            }
            diag.m_next = best;
        }

        const auto [m_t, d_t] = mixture_.nearest_component(s_t);
        diag.m_t = m_t;
        diag.d_t = d_t;
        diag.td_error = td_error(r_t, a_t, m_t, diag.next_action, diag.m_next, terminal);

        if (d_t < sched.rho || diag.td_error > cfg_.t_lower) {
            const UpdateWeight uw = update_weight(diag.td_error, s_t, a_t, m_t);
            diag.weight = uw.w;
            diag.weight_case = uw.which;
            mixture_.update_component(m_t, s_t, 1.0);
            q_update(m_t, a_t, sched.alpha, uw.w, diag.td_error);
        } else {
            diag.weight_case = weight_case(diag.td_error);
            diag.created_component = create_component(s_t);
        }
        return diag;
    }

    friend bool operator==(const Agent&, const Agent&) = default;

private:
    void require_nonempty() const {
        if (mixture_.empty()) {
            throw std::logic_error("Agent: mixture is empty; call bootstrap first");
        }
    }

    ActionDistribution action_posterior_from(const std::vector<double>& lik) const {
        const ActionDistribution prior = action_prior(q_);
        ActionDistribution out{};
        for (Action a : kAllActions) {
            const std::vector<double> col = component_given_action(q_, a);
            double sum = 0.0;
            for (std::size_t m = 0; m < lik.size(); ++m) {
                sum += lik[m] * col[m];
            }
            out[index(a)] = prior[index(a)] * sum;
        }
        normalize_or_uniform(out);
        return out;
    }

    AgentConfig cfg_;
    Mixture<Dim> mixture_;
    QTable q_;
};

using DrivingAgent = Agent<kStateDim>;

}  // namespace brl
