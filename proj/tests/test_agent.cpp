#include <gtest/gtest.h>

#include <cmath>

#include "brl/agent.hpp"
#include "cases.hpp"
#include "reference.hpp"
#include "toy_mdp.hpp"

using namespace brl;
using fixtures::SmallAgent;
using fixtures::SmallState;

namespace {

QTable table(std::initializer_list<QTable::Row> rows) {
    QTable q;
    for (const auto& r : rows) {
        q.add_row(r);
    }
    return q;
}

SmallState flat(double v) {
    SmallState s{};
    s.fill(v);
    return s;
}

// agent with k identical components (equal likelihood everywhere) and the given Q rows
SmallAgent twin_agent(std::initializer_list<QTable::Row> rows) {
    SmallAgent agent{AgentConfig{}, NigPrior<fixtures::kSmallDim>::uniform(1.0 / 6, 1.0, 3.0, 0.01)};
    Component<fixtures::kSmallDim> c;
    c.count = 3.0;
    c.mean = flat(1.0 / 6);
    c.scatter.fill(0.003);
    for (const auto& r : rows) {
        agent.push_component(c, r);
    }
    return agent;
}

ref::Model ref_model(const SmallAgent& agent) {
    ref::Model md;
    const auto& p = agent.mixture().prior();
    md.prior_mean.assign(p.mean.begin(), p.mean.end());
    md.prior_s2.assign(p.scale.begin(), p.scale.end());
    md.kappa0 = p.kappa;
    md.nu0 = p.dof;
    md.gamma = agent.config().gamma;
    md.t_lower = agent.config().t_lower;
    md.t_upper = agent.config().t_upper;
    for (std::size_t m = 0; m < agent.size(); ++m) {
        const auto& c = agent.mixture().component(m);
        md.comps.push_back({c.count, ref::Vec(c.mean.begin(), c.mean.end()),
                            ref::Vec(c.scatter.begin(), c.scatter.end())});
        md.q.push_back(agent.q().row(m));
    }
    return md;
}

}  // namespace

TEST(QOffset, Examples) {
    EXPECT_EQ(q_offset(table({{0, 0, 0, 0}})), 0.0);
    EXPECT_DOUBLE_EQ(q_offset(table({{-1, 0, 3, 0}, {2, 2, 2, 2}})), 1.5);
    EXPECT_DOUBLE_EQ(q_offset(table({{2, 5, 7, 3}})), -4.0 / 3.0);
}

TEST(ActionPosterior, AllZeroQIsUniform) {
    const SmallAgent agent = twin_agent({{0, 0, 0, 0}, {0, 0, 0, 0}});
    for (double p : agent.action_posterior(flat(0.3))) {
        EXPECT_DOUBLE_EQ(p, 0.25);
    }
}

TEST(ActionPosterior, SingleComponentOneHotRow) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.2));
    agent.q().at(0, Action::Forward) = 1.0;
    const ActionDistribution p = agent.action_posterior(flat(0.9));
    EXPECT_EQ(p, (ActionDistribution{1.0, 0.0, 0.0, 0.0}));
}

TEST(ActionPosterior, TwoComponentsMatchBruteForce) {
    const SmallAgent agent = twin_agent({{1, 0, 0, 0}, {0, 1, 0, 0}});
    const ref::Model md = ref_model(agent);
    const SmallState s = flat(0.15);
    const ActionDistribution got = agent.action_posterior(s);
    const ref::Vec want = ref::p_a_given_s(md, fixtures::to_ref(s));
    for (std::size_t a = 0; a < kActionCount; ++a) {
        EXPECT_NEAR(got[a], want[a], 1e-12);
    }
    // hand value: p(a) = (1,1,0,0)/2, p(m|a) one-hot -> (0.5, 0.5, 0, 0)
    EXPECT_NEAR(got[0], 0.5, 1e-12);
    EXPECT_NEAR(got[1], 0.5, 1e-12);
    EXPECT_EQ(agent.greedy_action(s), Action::Forward);  // exact tie goes to Forward
}

TEST(ComponentPosterior, Examples) {
    SmallAgent one(AgentConfig{});
    one.create_component(flat(0.2));
    EXPECT_EQ(one.component_posterior(flat(0.5), Action::TurnLeft), std::vector<double>{1.0});
    EXPECT_EQ(one.component_posterior_not(flat(0.5), Action::TurnLeft), std::vector<double>{1.0});

    // column Forward = (3, 1) -> p(m|a) = (0.75, 0.25) with q_hat = 0
    const SmallAgent two = twin_agent({{3, 0, 0, 0}, {1, 0, 0, 0}});
    const auto pos = two.component_posterior(flat(0.2), Action::Forward);
    EXPECT_NEAR(pos[0], 0.75, 1e-15);
    EXPECT_NEAR(pos[1], 0.25, 1e-15);
    const auto neg = two.component_posterior_not(flat(0.2), Action::Forward);
    EXPECT_NEAR(neg[0], 0.25, 1e-15);
    EXPECT_NEAR(neg[1], 0.75, 1e-15);
}

TEST(ComponentPosterior, UniformColumnLeavesLikelihoodsAlone) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.1));
    agent.create_component(flat(0.2));
    agent.create_component(flat(0.3));
    const SmallState s = flat(0.18);
    std::vector<double> lik = agent.likelihood_weights(s);
    normalize_or_uniform(lik);
    const auto neg = agent.component_posterior_not(s, Action::Backward);
    for (std::size_t m = 0; m < 3; ++m) {
        EXPECT_NEAR(neg[m], lik[m], 1e-14);
    }
}

TEST(TdError, Examples) {
    AgentConfig cfg;
    cfg.gamma = 0.9;
    SmallAgent agent(cfg);
    agent.create_component(flat(0.1));
    agent.create_component(flat(0.3));
    agent.q().at(1, Action::TurnRight) = 1.0;
    EXPECT_DOUBLE_EQ(agent.td_error(0.0, Action::Forward, 0, Action::TurnRight, 1, false), 0.9);
    agent.q().at(0, Action::Forward) = 2.5;
    EXPECT_DOUBLE_EQ(agent.td_error(-50.0, Action::Forward, 0, Action::TurnRight, 1, true), -52.5);
}

TEST(TdError, CancelsWithUnitDiscount) {
    AgentConfig cfg;
    cfg.gamma = 1.0;  // outside the loadable range, but the agent itself takes it
    SmallAgent agent(cfg);
    agent.create_component(flat(0.1));
    agent.q().at(0, Action::TurnLeft) = 4.0;
    EXPECT_EQ(agent.td_error(0.0, Action::TurnLeft, 0, Action::TurnLeft, 0, false), 0.0);
}

TEST(UpdateWeight, ThreeBands) {
    const SmallAgent agent = twin_agent({{3, 0, 0, 0}, {1, 0, 0, 0}});
    const SmallState s = flat(0.2);
    const UpdateWeight up = agent.update_weight(-3.0, s, Action::Forward, 0);
    EXPECT_EQ(up.which, WeightCase::Upper);
    EXPECT_DOUBLE_EQ(up.w, agent.component_posterior(s, Action::Forward)[0]);
    const UpdateWeight lo = agent.update_weight(-12.0, s, Action::Forward, 0);
    EXPECT_EQ(lo.which, WeightCase::Lower);
    EXPECT_DOUBLE_EQ(lo.w, agent.component_posterior_not(s, Action::Forward)[0]);
    const UpdateWeight mid = agent.update_weight(-7.0, s, Action::Forward, 0);
    EXPECT_EQ(mid.which, WeightCase::Middle);
    EXPECT_DOUBLE_EQ(mid.w, agent.component_marginal(s)[0]);
    // boundaries belong to the middle band
    EXPECT_EQ(agent.weight_case(-5.0), WeightCase::Middle);
    EXPECT_EQ(agent.weight_case(-10.0), WeightCase::Middle);
}

TEST(QUpdate, Examples) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.1));
    agent.q_update(0, Action::TurnRight, 0.5, 0.5, 4.0);
    EXPECT_EQ(agent.q().at(0, Action::TurnRight), 1.0);
    agent.q_update(0, Action::TurnRight, 0.5, 0.0, 4.0);
    agent.q_update(0, Action::TurnRight, 0.5, 0.7, 0.0);
    EXPECT_EQ(agent.q().at(0, Action::TurnRight), 1.0);
}

TEST(Behavior, TauExamples) {
    EXPECT_EQ(behavior_distribution(Action::TurnLeft, 0.5), (ActionDistribution{0.125, 0.125, 0.625, 0.125}));
    EXPECT_EQ(behavior_distribution(Action::Backward, 1.0), (ActionDistribution{0, 0, 0, 1}));
    EXPECT_EQ(behavior_distribution(Action::Forward, 0.0), (ActionDistribution{0.25, 0.25, 0.25, 0.25}));
}

TEST(Behavior, SelectActionFrequencies) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.2));
    agent.q().at(0, Action::TurnRight) = 5.0;
    Rng rng(11);
    std::array<int, kActionCount> hits{};
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const ActionChoice c = agent.select_action(flat(0.2), 0.5, rng);
        EXPECT_EQ(c.greedy, Action::TurnRight);
        ++hits[index(c.action)];
    }
    const ActionDistribution want = behavior_distribution(Action::TurnRight, 0.5);
    for (std::size_t a = 0; a < kActionCount; ++a) {
        const double sd = std::sqrt(n * want[a] * (1 - want[a]));
        EXPECT_NEAR(hits[a], n * want[a], 4 * sd);
    }
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(agent.select_action(flat(0.2), 1.0, rng).action, Action::TurnRight);
    }
    EXPECT_THROW(agent.select_action(flat(0.2), 1.5, rng), std::invalid_argument);
}

TEST(Step, AtExistingMeanUpdates) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.2));
    const ScheduleState sched = ScheduleState::initial(agent.config());
    const StepDiagnostics d = agent.step(flat(0.2), Action::Forward, -30.0, flat(0.2), false, sched);
    EXPECT_EQ(d.d_t, 0.0);
    EXPECT_FALSE(d.created_component.has_value());
    EXPECT_EQ(agent.size(), 1u);
    EXPECT_EQ(agent.mixture().component(0).count, 2.0);
    EXPECT_LT(agent.q().at(0, Action::Forward), 0.0);
}

TEST(Step, FarAndBadCreates) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.2));
    const ScheduleState sched = ScheduleState::initial(agent.config());
    SmallState s = flat(0.2);
    s[3] += 2 * sched.rho;
    // terminal with zero Q: td = r = T_l - 1
    const StepDiagnostics d =
        agent.step(s, Action::Forward, agent.config().t_lower - 1.0, flat(0.2), true, sched);
    EXPECT_NEAR(d.d_t, 2 * sched.rho, 1e-15);
    EXPECT_EQ(d.td_error, -11.0);
    ASSERT_TRUE(d.created_component.has_value());
    EXPECT_EQ(*d.created_component, 1u);
    EXPECT_EQ(agent.size(), 2u);
    EXPECT_EQ(agent.q().rows(), 2u);
    EXPECT_EQ(agent.q().row(1), (QTable::Row{0, 0, 0, 0}));
    EXPECT_EQ(agent.q().row(0), (QTable::Row{0, 0, 0, 0}));
    EXPECT_EQ(agent.mixture().component(1).mean, s);
}

TEST(Step, FarButGoodStillUpdates) {
    SmallAgent agent(AgentConfig{});
    agent.create_component(flat(0.2));
    const ScheduleState sched = ScheduleState::initial(agent.config());
    SmallState s = flat(0.2);
    s[0] += 0.5;
    const StepDiagnostics d = agent.step(s, Action::TurnLeft, 0.5, flat(0.2), false, sched);
    EXPECT_FALSE(d.created_component.has_value());
    EXPECT_GT(agent.q().at(0, Action::TurnLeft), 0.0);
}

TEST(Step, TwoStepTraceMatchesReference) {
    AgentConfig cfg;
    SmallAgent agent(cfg, NigPrior<fixtures::kSmallDim>::uniform(0.15, 1.0, 3.0, 0.01));
    agent.create_component(flat(1.0 / 6));
    ref::Model md = ref_model(agent);
    ScheduleState sched = ScheduleState::initial(cfg);
    SmallState s0 = flat(1.0 / 6);
    SmallState s1 = s0;
    s1[0] += 0.02;
    s1[1] -= 0.02;
    SmallState s2 = s0;
    s2[2] += 0.3;
    s2[5] -= 0.1;
    const struct {
        SmallState from, to;
        Action a;
        double r;
        bool term;
    } script[] = {{s0, s1, Action::Forward, 0.8, false}, {s2, s0, Action::TurnLeft, -40.0, true}};
    for (const auto& t : script) {
        const StepDiagnostics d = agent.step(t.from, t.a, t.r, t.to, t.term, sched);
        const ref::StepOut o = ref::step(md, fixtures::to_ref(t.from), static_cast<int>(index(t.a)), t.r,
                                         fixtures::to_ref(t.to), t.term, sched.alpha, sched.rho);
        EXPECT_EQ(static_cast<int>(index(d.next_action)), o.a_next);
        EXPECT_EQ(d.m_next, o.m_next);
        EXPECT_EQ(d.m_t, o.m_t);
        EXPECT_EQ(d.created_component.has_value(), o.created);
        EXPECT_EQ(static_cast<int>(d.weight_case), o.which);
        EXPECT_NEAR(d.td_error, o.td, 1e-12);
        EXPECT_NEAR(d.weight, o.w, 1e-12);
        sched.advance(cfg);
    }
    ASSERT_EQ(agent.size(), md.comps.size());
    EXPECT_EQ(agent.size(), 2u);  // second transition is far and bad
    for (std::size_t m = 0; m < agent.size(); ++m) {
        for (std::size_t a = 0; a < kActionCount; ++a) {
            EXPECT_NEAR(agent.q().row(m)[a], md.q[m][a], 1e-12);
        }
    }
}

TEST(Step, BruteForceAgreementOnRandomCases) {
    brl::Rng rng(2024);
    int created = 0;
    for (int i = 0; i < 1000; ++i) {
        fixtures::Case c = fixtures::random_case(rng);
        const std::size_t before = c.agent.size();
        const double err = fixtures::compare_case(c);
        ASSERT_LE(err, 1e-12) << "case " << i << " (" << before << " components)";
        SmallAgent probe = c.agent;
        created += probe.step(c.s_t, c.a_t, c.reward, c.s_next, c.terminal, c.sched).created_component ? 1 : 0;
    }
    // both branches were exercised
    EXPECT_GT(created, 10);
    EXPECT_LT(created, 990);
}

TEST(Step, DeterministicDiagnostics) {
    const auto run = [] {
        brl::Rng rng(77);
        SmallAgent agent(AgentConfig{});
        agent.bootstrap(fixtures::random_state(rng));
        ScheduleState sched = ScheduleState::initial(agent.config());
        std::vector<StepDiagnostics> out;
        SmallState s = fixtures::random_state(rng);
        for (int i = 0; i < 300; ++i) {
            const SmallState next = fixtures::random_state(rng);
            const Action a = agent.select_action(s, sched.tau, rng).action;
            out.push_back(agent.step(s, a, rng.uniform(-50, 1), next, rng.bernoulli(0.05), sched));
            sched.advance(agent.config());
            s = next;
        }
        return std::pair{out, agent};
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_TRUE(a.second == b.second);
}

TEST(Step, EmptyAgentRefuses) {
    SmallAgent agent(AgentConfig{});
    EXPECT_THROW(agent.step(flat(0.1), Action::Forward, 0, flat(0.1), false, {}), std::logic_error);
    agent.bootstrap(flat(0.1));
    agent.bootstrap(flat(0.5));
    EXPECT_EQ(agent.size(), 1u);
}

TEST(ToyMdp, ConvergesToValueIteration) {
    for (double gamma : {0.0, 0.5, 0.9}) {
        const toy::Result r = toy::run(gamma, 0.5, 1e-6, 100000);
        EXPECT_LT(r.max_error, 1e-6) << "gamma " << gamma << " after " << r.updates;
    }
}

TEST(SampleAction, MatchesDistribution) {
    Rng rng(8);
    const ActionDistribution p{0.1, 0.2, 0.3, 0.4};
    std::array<int, kActionCount> hits{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        ++hits[index(sample_action(p, rng))];
    }
    for (std::size_t a = 0; a < kActionCount; ++a) {
        EXPECT_NEAR(hits[a], n * p[a], 4 * std::sqrt(n * p[a] * (1 - p[a])));
    }
    EXPECT_EQ(sample_action({0, 0, 1, 0}, rng), Action::TurnLeft);
}
