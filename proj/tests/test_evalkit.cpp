#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "brl/evalkit.hpp"
#include "brl/random.hpp"

using namespace brl;

namespace {

StepRecord step_with(double r_o, double r_l, bool collision = false,
                     CollisionKind kind = CollisionKind::Static) {
    StepRecord s;
    s.measures.offroad_fraction = r_o;
    s.measures.otherlane_fraction = r_l;
    s.measures.collision = collision;
    s.measures.collision_kind = collision ? kind : CollisionKind::None;
    return s;
}

EpisodeRecord episode(std::vector<StepRecord> steps, Outcome outcome, double metres) {
    EpisodeRecord ep;
    ep.steps = std::move(steps);
    ep.outcome = outcome;
    ep.total_distance = metres;
    return ep;
}

std::vector<EpisodeRecord> random_records(Rng& rng, std::size_t n) {
    std::vector<EpisodeRecord> out;
    std::uint64_t global = 0;
    for (std::size_t e = 0; e < n; ++e) {
        EpisodeRecord ep;
        const std::size_t len = 1 + rng.below(30);
        for (std::size_t k = 0; k < len; ++k) {
            StepRecord s = step_with(rng.bernoulli(0.3) ? rng.uniform() : 0.0,
                                     rng.bernoulli(0.3) ? rng.uniform() : 0.0);
            s.step = global++;
            s.episode = e;
            s.reward = rng.uniform(-50, 1);
            s.td_error = rng.uniform(-60, 10);
            s.action = action_from_index(rng.below(4));
            s.n_components = rng.below(500);
            ep.steps.push_back(s);
            ep.total_distance += rng.uniform(0, 8);
        }
        ep.outcome = static_cast<Outcome>(rng.below(4));
        out.push_back(ep);
    }
    return out;
}

}  // namespace

TEST(Score, AverageOfThree) {
    EXPECT_NEAR(score_of(0.111, 0.968, 0.841), 0.90, 0.005);
    EXPECT_NEAR(score_of(0.024, 1.0, 1.0), 0.99, 0.005);
    EXPECT_EQ(score_of(0.0, 1.0, 1.0), 1.0);
}

TEST(Summarize, CountsPerStepAndPerEpisode) {
    const std::vector<EpisodeRecord> recs{
        episode({step_with(0.3, 0.0), step_with(0.0, 0.25), step_with(0.2, 0.2), step_with(0.5, 0.5)},
                Outcome::Success, 100.0),
        episode({step_with(0.0, 0.0, true)}, Outcome::Collision, 20.0),
    };
    const MetricSummary m = summarize(recs);
    EXPECT_DOUBLE_EQ(m.offroad, 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(m.otherlane, 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(m.either, 3.0 / 5.0);  // 0.2 is not above the threshold
    EXPECT_DOUBLE_EQ(m.success, 0.5);
    EXPECT_DOUBLE_EQ(m.no_collision, 0.5);
    EXPECT_DOUBLE_EQ(m.score, ((1 - 0.6) + 0.5 + 0.5) / 3);
    EXPECT_DOUBLE_EQ(m.dist, 120.0);
    EXPECT_EQ(m.episodes, 2u);
    EXPECT_EQ(m.steps, 5u);
    EXPECT_THROW(summarize({}), std::invalid_argument);
}

TEST(Summarize, PerfectRecords) {
    const std::vector<EpisodeRecord> recs(3, episode({step_with(0, 0), step_with(0, 0)}, Outcome::Success, 50));
    EXPECT_EQ(summarize(recs).score, 1.0);
}

TEST(Summarize, ThresholdIsConfigurable) {
    const std::vector<EpisodeRecord> recs{episode({step_with(0.1, 0.0)}, Outcome::Timeout, 1)};
    EXPECT_EQ(summarize(recs).offroad, 0.0);
    EXPECT_EQ(summarize(recs, 0.05).offroad, 1.0);
}

TEST(Beta, Examples) {
    const BetaParams flat = beta_posterior(0, 0);
    EXPECT_EQ(flat.alpha, 0.5);
    EXPECT_EQ(flat.beta, 0.5);
    EXPECT_EQ(flat.mean(), 0.5);
    EXPECT_NEAR(flat.pdf(0.5), 2.0 / M_PI, 1e-14);
    const BetaParams b = beta_posterior(9, 1);
    EXPECT_EQ(b.alpha, 9.5);
    EXPECT_EQ(b.beta, 1.5);
    EXPECT_NEAR(b.mean(), 9.5 / 11.0, 1e-15);
    EXPECT_EQ(b.pdf(0.0), 0.0);
    EXPECT_EQ(b.pdf(1.0), 0.0);
}

TEST(Beta, IntegratesToOne) {
    // x = sin^2(theta) removes the endpoint singularities of the half-integer exponents
    for (auto [s, f] : {std::pair{0, 0}, {9, 1}, {3, 7}, {40, 2}, {0, 12}}) {
        const BetaParams b = beta_posterior(s, f);
        const int n = 20000;
        const double h = (M_PI / 2) / n;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double th = (i + 0.5) * h;
            const double x = std::sin(th) * std::sin(th);
            sum += b.pdf(x) * 2 * std::sin(th) * std::cos(th);
        }
        EXPECT_NEAR(sum * h, 1.0, 1e-6) << s << "/" << f;
    }
}

TEST(Infractions, Examples) {
    // 10 km, two separate opposite-lane onsets, no collisions
    std::vector<EpisodeRecord> recs{
        episode({step_with(0, 0.5), step_with(0, 0.6), step_with(0, 0), step_with(0, 0.3)}, Outcome::Success,
                6000.0),
        episode({step_with(0, 0)}, Outcome::Success, 4000.0),
    };
    InfractionReport r = infractions_per_km(recs);
    EXPECT_DOUBLE_EQ(r.total_km, 10.0);
    EXPECT_EQ(r.opposite_lane.count, 2u);
    EXPECT_DOUBLE_EQ(r.opposite_lane.km_between, 5.0);
    EXPECT_FALSE(r.opposite_lane.unbounded);
    EXPECT_TRUE(r.collision_static.unbounded);
    EXPECT_DOUBLE_EQ(r.collision_static.km_between, 10.0);

    recs.push_back(episode({step_with(0.9, 0, true, CollisionKind::Dynamic), step_with(0.9, 0)},
                           Outcome::Collision, 0.0));
    r = infractions_per_km(recs);
    EXPECT_EQ(r.collision_dynamic.count, 1u);
    EXPECT_EQ(r.collision_static.count, 0u);
    EXPECT_EQ(r.sidewalk.count, 1u);
    EXPECT_EQ(r.opposite_lane.count, 2u);
    EXPECT_THROW(infractions_per_km({}), std::invalid_argument);
}

TEST(Csv, RoundTrip) {
    Rng rng(21);
    const auto recs = random_records(rng, 12);
    const auto rows = parse_steps_csv(steps_csv(recs));
    std::size_t i = 0;
    for (const EpisodeRecord& ep : recs) {
        for (const StepRecord& s : ep.steps) {
            ASSERT_LT(i, rows.size());
            const StepRow& r = rows[i++];
            EXPECT_EQ(r.step, s.step);
            EXPECT_EQ(r.episode, s.episode);
            EXPECT_EQ(r.r_o, s.measures.offroad_fraction);
            EXPECT_EQ(r.r_l, s.measures.otherlane_fraction);
            EXPECT_EQ(r.reward, s.reward);
            EXPECT_EQ(r.td_error, s.td_error);
            EXPECT_EQ(r.action, index(s.action));
            EXPECT_EQ(r.n_components, s.n_components);
        }
    }
    EXPECT_EQ(i, rows.size());
}

TEST(Csv, HeaderOnlyForEmptyInput) {
    EXPECT_EQ(steps_csv({}), std::string(kStepCsvHeader) + "\n");
    EXPECT_TRUE(parse_steps_csv(steps_csv({})).empty());
    EXPECT_THROW(parse_steps_csv("nope\n"), std::invalid_argument);
}

TEST(Export, ByteStableAndComplete) {
    Rng rng(5);
    const auto recs = random_records(rng, 6);
    const auto dir = std::filesystem::temp_directory_path() / "brl_export_test";
    std::filesystem::remove_all(dir);
    export_records(recs, dir / "a");
    export_records(recs, dir / "b");
    for (const char* name :
         {"steps.csv", "summary.json", "beta_success.csv", "beta_no_collision.csv", "lane_histogram.csv"}) {
        const std::string a = read_text(dir / "a" / name);
        EXPECT_FALSE(a.empty()) << name;
        EXPECT_EQ(a, read_text(dir / "b" / name)) << name;
    }
    const json summary = json::parse(read_text(dir / "a" / "summary.json"));
    EXPECT_DOUBLE_EQ(summary.at("metrics").at("score").get<double>(), summarize(recs).score);

    export_records({}, dir / "empty");
    EXPECT_EQ(read_text(dir / "empty" / "steps.csv"), std::string(kStepCsvHeader) + "\n");
    EXPECT_FALSE(std::filesystem::exists(dir / "empty" / "summary.json"));
    std::filesystem::remove_all(dir);
}

TEST(Export, UnwritablePathRaises) {
    EXPECT_THROW(write_text("/proc/brl-not-writable/x.csv", "x"), IoError);
    EXPECT_THROW(read_text("/nonexistent/brl.json"), IoError);
}

TEST(Export, LaneHistogramBins) {
    const std::vector<EpisodeRecord> recs{
        episode({step_with(0.0, 0.0), step_with(0.5, 0.0), step_with(0.0, 1.0)}, Outcome::Timeout, 1)};
    const std::string csv = lane_histogram_csv(recs);
    EXPECT_NE(csv.find("\n0,1\n"), std::string::npos);
    EXPECT_NE(csv.find("\n0.5,1\n"), std::string::npos);
    EXPECT_NE(csv.find("\n-1,1\n"), std::string::npos);
}
