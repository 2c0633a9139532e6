// brl: train / eval / matrix / export front end.
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 I/O.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "brl/harness.hpp"

namespace fs = std::filesystem;
using namespace brl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kIo = 3 };

constexpr std::uint64_t kQuickSteps = 500;
constexpr std::size_t kQuickEpisodes = 6;

struct Options {
    std::string config;
    std::string checkpoint;
    std::uint64_t seed = 1;
    std::optional<double> noise_flip;
    std::optional<double> noise_blobs;
    std::size_t episodes = 30;
    bool episodes_set = false;
    std::size_t seeds = 9;
    std::string out = "out";
    std::string scenario = "all";
    bool quick = false;
};

std::vector<Scenario> scenarios_of(const std::string& s) {
    if (s == "all") {
        return {kAllScenarios.begin(), kAllScenarios.end()};
    }
    return {scenario_from_string(s)};
}

ExperimentConfig load_config_file(const Options& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment(read_text(o.config));
    if (o.quick) {
        cfg.agent.t_max = std::min<std::uint64_t>(cfg.agent.t_max, kQuickSteps);
    }
    return cfg;
}

// Noise given on the command line; unset flags fall back to `base`.
NoiseConfig noise_from_flags(const Options& o, NoiseConfig base) {
    if (o.noise_flip) {
        base.flip_prob = *o.noise_flip;
    }
    if (o.noise_blobs) {
        base.blob_rate = *o.noise_blobs;
    }
    base.validate();
    return base;
}

std::size_t episodes_of(const Options& o) {
    return o.quick && !o.episodes_set ? kQuickEpisodes : o.episodes;
}

json load_checkpoint(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint", e.what());
    }
    Trainer::check_header(doc);
    return doc;
}

void print_summary(const MetricSummary& m) {
    std::printf("offroad %.3f  otherlane %.3f  either %.3f  success %.3f  no_collision %.3f  score %.3f  dist %.1f m\n",
                m.offroad, m.otherlane, m.either, m.success, m.no_collision, m.score, m.dist);
}

// ---------------------------------------------------------------------------------------

int cmd_train(const Options& o) {
    ExperimentConfig cfg = load_config_file(o);
    cfg.noise = noise_from_flags(o, cfg.noise);
    Trainer t(cfg, o.seed, scenarios_of(o.scenario));
    std::uint64_t next_report = 500;
    t.run(std::nullopt, [&](const StepRecord& r, const StepDiagnostics&) {
        if (r.step + 1 == next_report) {
            std::fprintf(stderr, "step %llu  components %zu\n", static_cast<unsigned long long>(r.step + 1),
                         r.n_components);
            next_report += 500;
        }
    });
    const fs::path dir(o.out);
    const auto hist = t.history();
    write_text(dir / "checkpoint.json", t.to_checkpoint().dump(1) + "\n");
    write_text(dir / "training_log.csv", steps_csv(hist));
    const std::uint64_t n = t.steps_done();
    const std::uint64_t window = std::min<std::uint64_t>(500, n / 2);
    std::printf("trained %llu steps, %zu episodes, %zu components\n", static_cast<unsigned long long>(n),
                hist.size(), t.agent().size());
    std::printf("mean reward: first %llu steps %.3f, last %llu steps %.3f\n",
                static_cast<unsigned long long>(window), mean_reward(hist, 0, window),
                static_cast<unsigned long long>(window), mean_reward(hist, n - window, n));
    std::printf("wrote %s\n", (dir / "checkpoint.json").string().c_str());
    return kOk;
}

int cmd_eval(const Options& o) {
    if (o.checkpoint.empty()) {
        std::fprintf(stderr, "eval: --checkpoint is required\n");
        return kUsage;
    }
    const json doc = load_checkpoint(o.checkpoint);
    ExperimentConfig cfg = experiment_from_json(doc.at("config"));
    const DrivingAgent agent = model_from_json<kStateDim>(doc.at("model"), cfg.agent);
    const NoiseConfig noise = noise_from_flags(o, NoiseConfig{});
    const auto records = evaluate(agent, cfg, noise, episodes_of(o), o.seed, scenarios_of(o.scenario));
    export_records(records, o.out);
    print_summary(summarize(records));
    std::printf("%s\n", summary_json(records).dump(2).c_str());
    return kOk;
}

struct MatrixRow {
    std::string cell;
    std::uint64_t seed;
    MetricSummary m;
};

constexpr const char* kMetricHeader = "offroad,otherlane,either,success,no_collision,score,dist";

std::array<double, 7> metrics_of(const MetricSummary& m) {
    return {m.offroad, m.otherlane, m.either, m.success, m.no_collision, m.score, m.dist};
}

std::string metric_fields(const std::array<double, 7>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + format_double(v[i]);
    }
    return out;
}

int cmd_matrix(const Options& o) {
    if (o.seeds < 2) {
        std::fprintf(stderr, "matrix: at least 2 seeds are required\n");
        return kUsage;
    }
    const ExperimentConfig base = load_config_file(o);
    // corruption used for TE training and DE deployment
    const NoiseConfig corruption = noise_from_flags(o, NoiseConfig{0.05, 2.0, 16});
    const std::vector<Scenario> scenarios = scenarios_of(o.scenario);
    const std::size_t episodes = episodes_of(o);
    std::vector<MatrixRow> rows;
    for (std::uint64_t k = 0; k < o.seeds; ++k) {
        const std::uint64_t seed = o.seed + k;
        for (const bool estimated : {false, true}) {
            ExperimentConfig cfg = base;
            cfg.noise = estimated ? corruption : NoiseConfig{};
            Trainer t(cfg, seed, scenarios);
            t.run();
            const std::string train = estimated ? "TE" : "TG";
            for (const bool deploy_estimated : {false, true}) {
                const auto recs = evaluate(t.agent(), cfg, deploy_estimated ? corruption : NoiseConfig{}, episodes,
                                           1000 + seed, scenarios);
                rows.push_back({train + (deploy_estimated ? "DE" : "DG"), seed, summarize(recs)});
                std::fprintf(stderr, "seed %llu %s score %.3f\n", static_cast<unsigned long long>(seed),
                             rows.back().cell.c_str(), rows.back().m.score);
            }
        }
    }

    std::string models = std::string("cell,seed,") + kMetricHeader + "\n";
    for (const MatrixRow& r : rows) {
        models += r.cell + "," + std::to_string(r.seed) + "," + metric_fields(metrics_of(r.m)) + "\n";
    }
    // per cell: mean and sample std over seeds, and the best model by score
    std::string report = std::string("cell,row,seed,") + kMetricHeader + "\n";
    std::printf("%-5s %-5s %8s %9s %7s %8s %12s %6s %9s\n", "cell", "row", "offroad", "otherlane", "either",
                "success", "no_collision", "score", "dist");
    for (const char* cell : {"TGDG", "TGDE", "TEDE", "TEDG"}) {
        std::vector<std::array<double, 7>> vals;
        const MatrixRow* best = nullptr;
        for (const MatrixRow& r : rows) {
            if (r.cell == cell) {
                vals.push_back(metrics_of(r.m));
                if (!best || r.m.score > best->m.score) {
                    best = &r;
                }
            }
        }
        std::array<double, 7> mean{};
        std::array<double, 7> sd{};
        for (const auto& v : vals) {
            for (std::size_t i = 0; i < 7; ++i) {
                mean[i] += v[i] / static_cast<double>(vals.size());
            }
        }
        for (const auto& v : vals) {
            for (std::size_t i = 0; i < 7; ++i) {
                sd[i] += (v[i] - mean[i]) * (v[i] - mean[i]) / static_cast<double>(vals.size() - 1);
            }
        }
        for (double& s : sd) {
            s = std::sqrt(s);
        }
        const auto line = [&](const char* what, const std::string& seed, const std::array<double, 7>& v) {
            report += std::string(cell) + "," + what + "," + seed + "," + metric_fields(v) + "\n";
            std::printf("%-5s %-5s %8.3f %9.3f %7.3f %8.3f %12.3f %6.3f %9.1f\n", cell, what, v[0], v[1], v[2], v[3],
                        v[4], v[5], v[6]);
        };
        line("mean", "", mean);
        line("std", "", sd);
        line("best", std::to_string(best->seed), metrics_of(best->m));
    }
    const fs::path dir(o.out);
    write_text(dir / "matrix_models.csv", models);
    write_text(dir / "matrix_report.csv", report);
    std::printf("wrote %s and %s\n", (dir / "matrix_models.csv").string().c_str(),
                (dir / "matrix_report.csv").string().c_str());
    return kOk;
}

int cmd_export(const Options& o) {
    if (o.checkpoint.empty()) {
        std::fprintf(stderr, "export: --checkpoint is required\n");
        return kUsage;
    }
    const json doc = load_checkpoint(o.checkpoint);
    const ExperimentConfig cfg = experiment_from_json(doc.at("config"));
    const DrivingAgent agent = model_from_json<kStateDim>(doc.at("model"), cfg.agent);
    std::string comps = "component,count";
    for (std::size_t d = 0; d < kStateDim; ++d) {
        comps += ",mean" + std::to_string(d);
    }
    for (std::size_t d = 0; d < kStateDim; ++d) {
        comps += ",scatter" + std::to_string(d);
    }
    comps += "\n";
    std::string q = "component,forward,right,left,backward\n";
    for (std::size_t m = 0; m < agent.size(); ++m) {
        const auto& c = agent.mixture().component(m);
        comps += std::to_string(m) + "," + format_double(c.count);
        for (double v : c.mean) {
            comps += "," + format_double(v);
        }
        for (double v : c.scatter) {
            comps += "," + format_double(v);
        }
        comps += "\n";
        q += std::to_string(m);
        for (double v : agent.q().row(m)) {
            q += "," + format_double(v);
        }
        q += "\n";
    }
    const fs::path dir(o.out);
    write_text(dir / "components.csv", comps);
    write_text(dir / "q_table.csv", q);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    write_text(dir / "schedule.json", doc.at("schedule").dump(2) + "\n");
    std::printf("exported %zu components to %s\n", agent.size(), dir.string().c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian mixture Q-learning driving agent"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON)");
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--noise-flip", o.noise_flip, "per-pixel class flip probability");
        sub->add_option("--noise-blobs", o.noise_blobs, "expected spurious blobs per frame");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--scenario", o.scenario, "scenario set")
            ->check(CLI::IsMember({"straight", "right", "left", "all"}));
        sub->add_flag("--quick", o.quick, "reduced t_max and episode count");
    };
    const auto episodes = [&](CLI::App* sub) {
        sub->add_option("--episodes", o.episodes, "evaluation episodes")
            ->check(CLI::PositiveNumber)
            ->each([&](const std::string&) { o.episodes_set = true; });
    };

    CLI::App* train = app.add_subcommand("train", "train a model, write checkpoint and training log");
    common(train);
    CLI::App* eval = app.add_subcommand("eval", "greedy deployment of a checkpoint");
    common(eval);
    episodes(eval);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate");
    CLI::App* matrix = app.add_subcommand("matrix", "train/deploy matrix over several seeds");
    common(matrix);
    episodes(matrix);
    matrix->add_option("--seeds", o.seeds, "number of seeds (from --seed upward)");
    CLI::App* exp = app.add_subcommand("export", "dump model tables of a checkpoint");
    exp->add_option("--checkpoint", o.checkpoint, "checkpoint to dump");
    exp->add_option("--out", o.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train) {
            return cmd_train(o);
        }
        if (*eval) {
            return cmd_eval(o);
        }
        if (*matrix) {
            return cmd_matrix(o);
        }
        return cmd_export(o);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kUsage;
    }
}
