#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "brl/core.hpp"

namespace brl {

using ComponentId = std::size_t;

/// Log density of a univariate Student-t with `dof` degrees of freedom, location `loc`
/// and squared scale `scale2`.
inline double student_t_logpdf(double x, double dof, double loc, double scale2) {
    const double z2 = (x - loc) * (x - loc) / (dof * scale2);
    return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
           0.5 * std::log(dof * M_PI * scale2) - 0.5 * (dof + 1.0) * std::log1p(z2);
}

/// Conjugate prior hyperparameters shared by every component of a mixture.
///
/// Each dimension carries an independent Normal / scaled-inverse-chi-square prior:
/// mu | sigma^2 ~ N(mean, sigma^2 / kappa), sigma^2 ~ Inv-chi^2(dof, scale).
template <std::size_t Dim>
struct NigPrior {
    Vec<Dim> mean{};
    double kappa = 1.0;
    double dof = 3.0;
    Vec<Dim> scale{};

    static NigPrior uniform(double mean, double kappa, double dof, double scale) {
        NigPrior p;
        p.mean.fill(mean);
        p.kappa = kappa;
        p.dof = dof;
        p.scale.fill(scale);
        return p;
    }

    static NigPrior from_config(const PriorConfig& cfg) {
        return uniform(cfg.mean, cfg.kappa, cfg.dof, cfg.scale);
    }

    friend bool operator==(const NigPrior&, const NigPrior&) = default;
};

/// Sufficient statistics of one mixture component.
///
/// `mean` is the running sample mean of the observations assigned to the component (the
/// vector nearest-component search compares against); `scatter` is the per-dimension sum of
/// squared deviations from it. Posterior and predictive quantities are derived on demand.
template <std::size_t Dim>
struct Component {
    double count = 0.0;
    Vec<Dim> mean{};
    Vec<Dim> scatter{};

    friend bool operator==(const Component&, const Component&) = default;
};

/// Posterior-predictive parameters of a component in one dimension.
struct Predictive1d {
    double dof;
    double loc;
    double scale2;
};

/// Adaptive diagonal Gaussian mixture with conjugate Normal-Inverse-Gamma components.
///
/// Components are only ever appended; their ids are dense indices in creation order.
template <std::size_t Dim>
class Mixture {
public:
    using State = Vec<Dim>;
    static constexpr double kScaleFloor = 1e-8;

    Mixture() = default;
    explicit Mixture(NigPrior<Dim> prior) : prior_(std::move(prior)) {
        if (!(prior_.kappa > 0.0) || !(prior_.dof > 0.0)) {
            throw std::invalid_argument("Mixture: prior kappa and dof must be positive");
        }
    }

    std::size_t size() const noexcept { return components_.size(); }
    bool empty() const noexcept { return components_.empty(); }
    const NigPrior<Dim>& prior() const noexcept { return prior_; }
    const std::vector<Component<Dim>>& components() const noexcept { return components_; }

    const Component<Dim>& component(ComponentId m) const {
        check(m);
        return components_[m];
    }

    /// Appends a component holding the single observation `s`.
    ComponentId create_component(const State& s) {
        Component<Dim> c;
        c.count = 1.0;
        c.mean = s;
        c.scatter.fill(0.0);
        components_.push_back(c);
        return components_.size() - 1;
    }

    /// Restores a component verbatim (checkpoint loading, test fixtures).
    ComponentId push_component(const Component<Dim>& c) {
        if (!(c.count >= 0.0)) {
            throw std::invalid_argument("Mixture: component count must be non-negative");
        }
        for (std::size_t d = 0; d < Dim; ++d) {
            if (!std::isfinite(c.mean[d]) || !(c.scatter[d] >= 0.0)) {
                throw std::invalid_argument("Mixture: component statistics must be finite");
            }
        }
        components_.push_back(c);
        return components_.size() - 1;
    }

    /// Adds one observation to component `m` (Welford recursion).
    ///
    /// `weight` is validated but the statistics always absorb a unit observation; the
    /// responsibility weight enters learning only through the value update.
    void update_component(ComponentId m, const State& s, double weight = 1.0) {
        check(m);
        if (!(weight >= 0.0 && weight <= 1.0)) {
            throw std::invalid_argument("Mixture::update_component: weight must lie in [0, 1]");
        }
        Component<Dim>& c = components_[m];
        const double n = c.count + 1.0;
        for (std::size_t d = 0; d < Dim; ++d) {
            const double delta = s[d] - c.mean[d];
            c.mean[d] += delta / n;
            c.scatter[d] += delta * (s[d] - c.mean[d]);
        }
        c.count = n;
    }

    Predictive1d predictive(ComponentId m, std::size_t d) const {
        check(m);
        return predictive_of(components_[m], d);
    }

    /// Conjugate posterior mean of the component's location in dimension `d`.
    double posterior_mean(ComponentId m, std::size_t d) const { return predictive(m, d).loc; }

    /// Posterior-predictive squared scale per dimension; always >= kScaleFloor.
    Vec<Dim> scale(ComponentId m) const {
        check(m);
        Vec<Dim> out{};
        for (std::size_t d = 0; d < Dim; ++d) {
            out[d] = predictive_of(components_[m], d).scale2;
        }
        return out;
    }

    /// log p(s | m): product of per-dimension Student-t posterior predictives.
    double predictive_loglik(const State& s, ComponentId m) const {
        check(m);
        const Component<Dim>& c = components_[m];
        double total = 0.0;
        for (std::size_t d = 0; d < Dim; ++d) {
            const Predictive1d p = predictive_of(c, d);
            total += student_t_logpdf(s[d], p.dof, p.loc, p.scale2);
        }
        return total;
    }

    std::vector<double> logliks(const State& s) const {
        std::vector<double> out(components_.size());
        for (ComponentId m = 0; m < components_.size(); ++m) {
            out[m] = predictive_loglik(s, m);
        }
        return out;
    }

    /// Component minimizing the l-infinity distance between `s` and its mean; ties go to the
    /// lower id.
    std::pair<ComponentId, double> nearest_component(const State& s) const {
        if (components_.empty()) {
            throw std::logic_error("Mixture::nearest_component: mixture is empty");
        }
        ComponentId best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (ComponentId m = 0; m < components_.size(); ++m) {
            const double dist = linf(s, components_[m].mean);
            if (dist < best_dist) {
                best = m;
                best_dist = dist;
            }
        }
        return {best, best_dist};
    }

    static double linf(const State& a, const State& b) noexcept {
        double out = 0.0;
        for (std::size_t d = 0; d < Dim; ++d) {
            out = std::max(out, std::abs(a[d] - b[d]));
        }
        return out;
    }

    friend bool operator==(const Mixture&, const Mixture&) = default;

private:
    void check(ComponentId m) const {
        if (m >= components_.size()) {
            throw std::out_of_range("Mixture: unknown component " + std::to_string(m));
        }
    }

    Predictive1d predictive_of(const Component<Dim>& c, std::size_t d) const {
        const double n = c.count;
        const double kappa_n = prior_.kappa + n;
        const double dof_n = prior_.dof + n;
        const double dev = c.mean[d] - prior_.mean[d];
        const double loc = (prior_.kappa * prior_.mean[d] + n * c.mean[d]) / kappa_n;
        const double sigma2 =
            (prior_.dof * prior_.scale[d] + c.scatter[d] + n * prior_.kappa / kappa_n * dev * dev) /
            dof_n;
        const double scale2 = std::max(kScaleFloor, sigma2 * (kappa_n + 1.0) / kappa_n);
        return {dof_n, loc, scale2};
    }

    NigPrior<Dim> prior_ = NigPrior<Dim>::uniform(1.0 / Dim, 1.0, 3.0, 1.0 / (double(Dim) * Dim));
    std::vector<Component<Dim>> components_;
};

}  // namespace brl
