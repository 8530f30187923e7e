/*
 * Copyright 2026 The verdict-fit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// verdict: simulate, fit, evaluate and sweep from the command line.
//
// Every command writes its outputs plus one run manifest next to the primary
// output (<out>.manifest.json). On failure all outputs of the run are removed
// and the process exits nonzero with a one-line diagnostic on stderr.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "verdict/io.hpp"
#include "verdict/metrics.hpp"
#include "verdict/neuralnet.hpp"
#include "verdict/nlls.hpp"
#include "verdict/simulate.hpp"

namespace fs = std::filesystem;
using namespace verdict;
using io::Json;

namespace {

/// Seed offset for the supervised network's own training set, derived from
/// the master seed of a run.
constexpr std::uint64_t kSupervisedTrainStream = 7;

const CLI::Validator kAtLeastOne(
    [](std::string& v) -> std::string {
        long long x = 0;
        if (!CLI::detail::lexical_cast(v, x) || x < 1) return "must be an integer >= 1, got '" + v + "'";
        return {};
    },
    "INT>=1");

const CLI::Validator kPositive(
    [](std::string& v) -> std::string {
        double x = 0.0;
        if (!CLI::detail::lexical_cast(v, x) || !(x > 0.0) || !std::isfinite(x)) return "must be a number > 0, got '" + v + "'";
        return {};
    },
    "NUM>0");

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tracks files written by a command; removes them unless committed.
class OutputSet {
public:
    void add(const std::string& p) { paths_.push_back(p); }
    const std::vector<std::string>& paths() const { return paths_; }
    void commit() { committed_ = true; }
    ~OutputSet() {
        if (committed_) return;
        for (const auto& p : paths_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

private:
    std::vector<std::string> paths_;
    bool committed_ = false;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

struct Globals {
    std::size_t threads = 0;
    std::vector<std::string> argv;
    std::string config_file;

    std::size_t thread_count() const { return threads > 0 ? threads : default_thread_count(); }
};

AcquisitionProtocol protocol_from(const std::string& path) { return path.empty() ? default_protocol() : load_protocol(path); }

std::string protocol_label(const std::string& path) { return path.empty() ? "default" : path; }

void write_output(OutputSet& outs, const std::string& path, const std::string& contents) {
    if (path.empty()) throw UsageError("output path must not be empty");
    outs.add(path);
    csv::write_file(path, contents);
}

void write_manifest(OutputSet& outs, io::RunManifest& m, const Globals& g, const std::string& primary) {
    m.command_line = g.argv;
    m.outputs = outs.paths();
    if (!g.config_file.empty()) m.config["config_file"] = g.config_file;
    const std::string path = primary + ".manifest.json";
    const std::string text = m.to_json().dump(2) + "\n";
    outs.add(path);
    csv::write_file(path, text);
}

io::SignalFile load_checked(const std::string& path, const VerdictModel& model) {
    auto f = io::load_signals(path);
    if (static_cast<std::size_t>(f.signals.cols()) != model.size())
        throw std::runtime_error(path + ": " + std::to_string(f.signals.cols()) + " signal columns, protocol has " +
                                 std::to_string(model.size()));
    return f;
}

// ---------------------------------------------------------------------------
// Engines shared by fit and sweep-snr

struct NetOptions {
    int max_epochs = 1000;
    int patience = 10;
    double learning_rate = 0.0;  // 0: engine default
    int batch_size = 0;          // 0: engine default
    double dropout = -1.0;       // < 0: engine default
    std::string dropout_placement = "last_hidden";
    std::string activation = "relu";
    double validation_fraction = 0.2;
    std::vector<int> hidden;  // empty: engine default

    TrainConfig apply(TrainConfig c, std::uint64_t seed) const {
        c.max_epochs = max_epochs;
        c.patience = patience;
        if (learning_rate > 0.0) c.learning_rate = learning_rate;
        if (batch_size > 0) c.batch_size = batch_size;
        if (dropout >= 0.0) c.dropout_p = dropout;
        c.dropout_placement = placement_from_name(dropout_placement);
        c.validation_fraction = validation_fraction;
        c.seed = seed;
        c.validate();
        return c;
    }

    Json to_json(const TrainConfig& c) const {
        Json j;
        j["learning_rate"] = c.learning_rate;
        j["batch_size"] = c.batch_size;
        j["max_epochs"] = c.max_epochs;
        j["patience"] = c.patience;
        j["dropout_p"] = c.dropout_p;
        j["dropout_placement"] = placement_name(c.dropout_placement);
        j["validation_fraction"] = c.validation_fraction;
        j["activation"] = activation;
        j["hidden"] = hidden;
        j["seed"] = c.seed;
        return j;
    }
};

void add_net_options(CLI::App* sub, NetOptions& o) {
    sub->add_option("--max-epochs", o.max_epochs, "Epoch cap")->check(kAtLeastOne)->capture_default_str();
    sub->add_option("--patience", o.patience, "Early-stopping patience (epochs)")->check(kAtLeastOne)->capture_default_str();
    sub->add_option("--lr", o.learning_rate, "ADAM learning rate (default: engine default)")->check(kPositive);
    sub->add_option("--batch-size", o.batch_size, "Minibatch size (default: engine default)")->check(kAtLeastOne);
    sub->add_option("--dropout", o.dropout, "Dropout probability (default: engine default)")->check(CLI::Range(0.0, 0.99));
    sub->add_option("--dropout-placement", o.dropout_placement, "input | last_hidden | all_hidden")
        ->check(CLI::IsMember({"input", "last_hidden", "all_hidden"}))
        ->capture_default_str();
    sub->add_option("--activation", o.activation, "relu | tanh")->check(CLI::IsMember({"relu", "tanh"}))->capture_default_str();
    sub->add_option("--validation-fraction", o.validation_fraction, "Held-out fraction for early stopping")
        ->check(CLI::Range(0.0, 0.9))
        ->capture_default_str();
    sub->add_option("--hidden", o.hidden, "Hidden layer widths (default: engine default)")->delimiter(',');
}

struct NllsOptions {
    int starts = 3;
    int max_iterations = 200;

    NllsConfig config() const {
        NllsConfig c;
        c.starts = starts;
        c.max_iterations = max_iterations;
        c.validate();
        return c;
    }
};

struct FitOutcome {
    std::vector<io::EstimateRow> rows;
    std::optional<TrainTrace> trace;
    std::optional<MlpModel> model;
    Json config;
};

FitOutcome run_nlls(const io::SignalFile& in, const VerdictModel& vm, const NllsOptions& o, std::size_t threads) {
    const auto cfg = o.config();
    FitOutcome out;
    const auto fits = fit_volume(in.signals, vm, cfg, threads);
    out.rows = io::estimate_rows(in.voxel_ids, fits);
    std::size_t failed = 0;
    for (const auto& f : fits) failed += f.error.empty() ? 0 : 1;
    out.config = {{"starts", cfg.starts},
                  {"max_iterations", cfg.max_iterations},
                  {"grid_points", cfg.grid_points},
                  {"failed_voxels", failed}};
    return out;
}

SupervisedResult train_supervised_on(const io::SignalFile& train, const NetOptions& o, std::uint64_t seed) {
    if (!train.truth) throw std::runtime_error("supervised training needs a dataset with ground-truth columns");
    const auto cfg = o.apply(supervised_defaults(), seed);
    const auto act = activation_from_name(o.activation);
    return o.hidden.empty() ? train_supervised(train.signals, *train.truth, cfg, {}, {150, 150, 150}, act)
                            : train_supervised(train.signals, *train.truth, cfg, {}, o.hidden, act);
}

FitOutcome run_supervised(const io::SignalFile& in, const VerdictModel& vm, const MlpModel& model,
                          std::size_t threads) {
    FitOutcome out;
    const auto p = predict_supervised(model, in.signals, {}, threads);
    out.rows = io::estimate_rows(in.voxel_ids, p, in.signals, vm, threads);
    out.model = model;
    return out;
}

FitOutcome run_ssverdict(const io::SignalFile& in, const VerdictModel& vm, const NetOptions& o, std::uint64_t seed,
                         std::size_t threads) {
    const auto cfg = o.apply(selfsupervised_defaults(), seed);
    auto res = train_selfsupervised(in.signals, vm, cfg, {}, o.hidden, activation_from_name(o.activation), threads);
    FitOutcome out;
    out.rows = io::estimate_rows(in.voxel_ids, res.params, in.signals, vm, threads);
    out.trace = res.trace;
    out.model = res.model;
    out.config = o.to_json(cfg);
    return out;
}

Json trace_summary(const TrainTrace& t) {
    return {{"epochs", t.train_loss.size()},
            {"best_epoch", t.best_epoch},
            {"stop_reason", t.stop_reason},
            {"best_val_loss", t.best_epoch >= 0 ? t.val_loss[static_cast<std::size_t>(t.best_epoch)] : 0.0}};
}

// ---------------------------------------------------------------------------
// Commands

struct SimulateArgs {
    std::size_t n = 0;
    double snr = 50.0;
    std::uint64_t seed = 0;
    std::string protocol;
    std::string out;
    bool allow_unphysical = false;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
    OutputSet outs;
    Stopwatch sw;
    const VerdictModel vm(protocol_from(a.protocol));
    SimulationOptions opt;
    opt.allow_unphysical_fvasc = a.allow_unphysical;
    opt.threads = g.thread_count();
    const auto ds = generate_dataset(a.n, a.snr, vm, a.seed, opt);
    write_output(outs, a.out, io::dataset_to_csv(ds));
    io::RunManifest m;
    m.seeds["master"] = a.seed;
    m.config = {{"n", a.n}, {"snr", a.snr}, {"protocol", protocol_label(a.protocol)},
                {"allow_unphysical_fvasc", a.allow_unphysical}};
    m.extra["dataset"] = io::dataset_metadata(ds, protocol_label(a.protocol));
    if (!a.protocol.empty()) m.inputs.push_back(a.protocol);
    m.stages.push_back({"simulate", sw.seconds()});
    write_manifest(outs, m, g, a.out);
    outs.commit();
    return 0;
}

struct FitArgs {
    std::string method;
    std::string in;
    std::string out;
    std::string protocol;
    std::uint64_t seed = 0;
    std::string model_in;
    std::string train_data;
    std::string model_out;
    std::string trace_out;
    NllsOptions nlls;
    NetOptions net;
};

int cmd_fit(const FitArgs& a, const Globals& g) {
    OutputSet outs;
    const VerdictModel vm(protocol_from(a.protocol));
    const auto in = load_checked(a.in, vm);
    io::RunManifest m;
    m.inputs.push_back(a.in);
    if (!a.protocol.empty()) m.inputs.push_back(a.protocol);
    m.seeds["master"] = a.seed;
    FitOutcome res;
    Stopwatch sw;
    if (a.method == "nlls") {
        res = run_nlls(in, vm, a.nlls, g.thread_count());
    } else if (a.method == "supervised") {
        if (a.model_in.empty() == a.train_data.empty())
            throw UsageError("fit supervised needs exactly one of --model or --train-data");
        MlpModel model;
        if (!a.model_in.empty()) {
            auto loaded = io::load_model(a.model_in);
            if (loaded.kind != "supervised") throw std::runtime_error(a.model_in + ": not a supervised model");
            model = std::move(loaded.model);
            m.inputs.push_back(a.model_in);
        } else {
            const auto train = load_checked(a.train_data, vm);
            m.inputs.push_back(a.train_data);
            auto tr = train_supervised_on(train, a.net, a.seed);
            model = std::move(tr.model);
            res.trace = tr.trace;
            res.config = a.net.to_json(a.net.apply(supervised_defaults(), a.seed));
        }
        auto pred = run_supervised(in, vm, model, g.thread_count());
        res.rows = std::move(pred.rows);
        res.model = std::move(pred.model);
    } else {
        res = run_ssverdict(in, vm, a.net, a.seed, g.thread_count());
    }
    const double fit_seconds = sw.seconds();
    write_output(outs, a.out, io::estimates_to_csv(res.rows));
    if (res.trace) {
        const std::string trace_path = a.trace_out.empty() ? a.out + ".trace.csv" : a.trace_out;
        write_output(outs, trace_path, io::trace_to_csv(*res.trace));
        m.extra["training"] = trace_summary(*res.trace);
    }
    if (!a.model_out.empty()) {
        if (!res.model) throw UsageError("--model-out is not available for method " + a.method);
        write_output(outs, a.model_out, io::model_to_json(*res.model, a.method).dump(1) + "\n");
    }
    m.config = res.config;
    m.config["method"] = a.method;
    m.config["protocol"] = protocol_label(a.protocol);
    m.config["threads"] = g.thread_count();
    m.stages.push_back({"fit", fit_seconds});
    write_manifest(outs, m, g, a.out);
    outs.commit();
    return 0;
}

struct TrainArgs {
    std::string train_data;
    std::string model_out;
    std::string trace_out;
    std::string protocol;
    std::uint64_t seed = 0;
    NetOptions net;
};

int cmd_train_supervised(const TrainArgs& a, const Globals& g) {
    OutputSet outs;
    const VerdictModel vm(protocol_from(a.protocol));
    const auto train = load_checked(a.train_data, vm);
    Stopwatch sw;
    auto tr = train_supervised_on(train, a.net, a.seed);
    const double secs = sw.seconds();
    write_output(outs, a.model_out, io::model_to_json(tr.model, "supervised").dump(1) + "\n");
    write_output(outs, a.trace_out.empty() ? a.model_out + ".trace.csv" : a.trace_out, io::trace_to_csv(tr.trace));
    io::RunManifest m;
    m.inputs.push_back(a.train_data);
    m.seeds["master"] = a.seed;
    m.config = a.net.to_json(a.net.apply(supervised_defaults(), a.seed));
    m.extra["training"] = trace_summary(tr.trace);
    m.stages.push_back({"train", secs});
    write_manifest(outs, m, g, a.model_out);
    outs.commit();
    return 0;
}

struct EvaluateArgs {
    std::string truth;
    std::vector<std::string> methods;  // name=path
    std::string out_json;
    std::string out_table;
    std::string scatter_dir;
    std::string variance_mode = "estimates";
};

double recorded_fit_seconds(const std::string& est_path) {
    const std::string mpath = est_path + ".manifest.json";
    if (!fs::exists(mpath)) return 0.0;
    try {
        const auto j = Json::parse(csv::slurp(mpath));
        return j.at("wall_clock_s").value("fit", 0.0);
    } catch (const std::exception&) {
        return 0.0;
    }
}

int cmd_evaluate(const EvaluateArgs& a, const Globals& g) {
    OutputSet outs;
    Stopwatch sw;
    const auto truth_file = io::load_signals(a.truth);
    if (!truth_file.truth) throw std::runtime_error(a.truth + ": not a dataset (no ground-truth columns)");
    io::RunManifest m;
    m.inputs.push_back(a.truth);
    std::vector<MethodEstimates> methods;
    for (const auto& spec : a.methods) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            throw UsageError("--method expects name=path, got '" + spec + "'");
        const std::string name = spec.substr(0, eq), path = spec.substr(eq + 1);
        const auto rows = io::load_estimates(path);
        if (rows.size() != truth_file.size())
            throw std::runtime_error(path + ": " + std::to_string(rows.size()) + " voxels, truth has " +
                                     std::to_string(truth_file.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].voxel_id != truth_file.voxel_ids[i])
                throw std::runtime_error(path + ": voxel_id mismatch at row " + std::to_string(i + 1));
        methods.push_back({name, io::params_of(rows), recorded_fit_seconds(path)});
        m.inputs.push_back(path);
        if (fs::exists(path + ".manifest.json")) m.inputs.push_back(path + ".manifest.json");
    }
    Json dataset = {{"truth_file", a.truth}, {"sha256", io::sha256_file(a.truth)}, {"n", truth_file.size()}};
    const auto rep = method_report(*truth_file.truth, methods, dataset, variance_mode_from_name(a.variance_mode));
    write_output(outs, a.out_json, report_to_json(rep).dump(2) + "\n");
    if (!a.out_table.empty()) write_output(outs, a.out_table, report_to_table(rep));
    if (!a.scatter_dir.empty()) {
        fs::create_directories(a.scatter_dir);
        for (const auto& me : methods)
            for (int p = 0; p < kTissueParamCount; ++p) {
                const auto path = (fs::path(a.scatter_dir) / (me.name + "_" + kParamNames[p] + ".csv")).string();
                write_output(outs, path, io::scatter_to_csv(param_column(*truth_file.truth, p), param_column(me.estimates, p)));
            }
    }
    m.config = {{"variance_mode", a.variance_mode}};
    m.stages.push_back({"evaluate", sw.seconds()});
    write_manifest(outs, m, g, a.out_json);
    outs.commit();
    return 0;
}

struct SweepArgs {
    std::vector<double> snr{10, 25, 50, 75, 100};
    std::size_t n = 1000;
    std::size_t train_n = 10000;
    double train_snr = 50.0;  // 0: train at each level's SNR
    std::uint64_t seed = 0;
    std::vector<std::string> methods{"nlls", "supervised", "ssverdict"};
    std::string protocol;
    std::string out;
    std::string summary;
    NllsOptions nlls;
    NetOptions net;
};

int cmd_sweep_snr(const SweepArgs& a, const Globals& g) {
    OutputSet outs;
    const VerdictModel vm(protocol_from(a.protocol));
    SimulationOptions opt;
    opt.threads = g.thread_count();
    io::RunManifest m;
    m.seeds["master"] = a.seed;
    std::vector<io::SweepBlock> blocks;
    std::optional<MlpModel> shared_model;
    Json ranks = Json::array();
    for (std::size_t k = 0; k < a.snr.size(); ++k) {
        const std::uint64_t level_seed = derive_seed(a.seed, k);
        m.seeds["snr_" + csv::format_double(a.snr[k])] = level_seed;
        const auto ds = generate_dataset(a.n, a.snr[k], vm, level_seed, opt);
        io::SignalFile in;
        for (std::size_t i = 0; i < ds.size(); ++i) in.voxel_ids.push_back(static_cast<std::int64_t>(i));
        in.signals = ds.noisy;
        std::map<std::string, std::vector<double>> abs_median;
        for (const auto& method : a.methods) {
            Stopwatch sw;
            FitOutcome res;
            if (method == "nlls") {
                res = run_nlls(in, vm, a.nlls, g.thread_count());
            } else if (method == "supervised") {
                if (a.train_snr <= 0.0 || !shared_model) {
                    const double snr = a.train_snr > 0.0 ? a.train_snr : a.snr[k];
                    const std::uint64_t train_seed = a.train_snr > 0.0 ? a.seed : level_seed;
                    const auto train_ds = generate_dataset(a.train_n, snr, vm, derive_seed(train_seed, kSupervisedTrainStream), opt);
                    io::SignalFile train;
                    train.voxel_ids.assign(train_ds.size(), 0);
                    train.signals = train_ds.noisy;
                    train.truth = train_ds.params;
                    shared_model = train_supervised_on(train, a.net, train_seed).model;
                }
                res = run_supervised(in, vm, *shared_model, g.thread_count());
            } else {
                res = run_ssverdict(in, vm, a.net, level_seed, g.thread_count());
            }
            m.stages.push_back({"snr_" + csv::format_double(a.snr[k]) + "_" + method, sw.seconds()});
            blocks.push_back(io::sweep_block(a.snr[k], method, ds.params, io::params_of(res.rows)));
            for (const auto& d : blocks.back().diff) abs_median[method].push_back(std::fabs(quantile(d, 0.5)));
        }
        for (int p = 0; p < kTissueParamCount; ++p) {
            std::string best;
            double best_v = 0.0;
            for (const auto& method : a.methods) {
                const double v = abs_median[method][static_cast<std::size_t>(p)];
                if (best.empty() || v < best_v) best = method, best_v = v;
            }
            ranks.push_back({{"snr", a.snr[k]}, {"param", kParamNames[p]}, {"closest_median_to_zero", best}});
        }
    }
    write_output(outs, a.out, io::sweep_to_csv(blocks));
    write_output(outs, a.summary.empty() ? a.out + ".summary.csv" : a.summary, io::sweep_summary_to_csv(blocks));
    m.config = {{"snr", a.snr}, {"n", a.n}, {"train_n", a.train_n}, {"train_snr", a.train_snr}, {"methods", a.methods},
                {"protocol", protocol_label(a.protocol)}};
    m.extra["median_rank"] = ranks;
    write_manifest(outs, m, g, a.out);
    outs.commit();
    return 0;
}

int cmd_protocol_show(const std::string& protocol, const std::string& format) {
    const auto p = protocol_from(protocol);
    if (format == "csv") {
        std::cout << protocol_to_csv(p);
        return 0;
    }
    std::printf("%5s %10s %8s %8s %8s %12s %5s\n", "index", "b(s/mm2)", "delta", "Delta", "TE", "G(mT/m)", "b0");
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& s = p[i];
        // T/um -> mT/m
        std::printf("%5zu %10g %8g %8g %8g %12.4f %5s\n", i, s.b, s.delta, s.Delta, s.te, gradient_strength(s) * 1e9,
                    s.is_b0 ? "yes" : "no");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VERDICT diffusion-MRI model fitting: simulation, NLLS, supervised and self-supervised networks"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags take precedence");
    Globals g;
    for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);
    app.add_option("--threads", g.threads, "Worker threads (default: machine parallelism); never changes results")
        ->envname("VERDICT_THREADS")
        ->check(CLI::NonNegativeNumber);

    SimulateArgs sim;
    auto* s_sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
    s_sim->add_option("--n", sim.n, "Number of voxels")->required()->check(kAtLeastOne);
    s_sim->add_option("--snr", sim.snr, "Signal-to-noise ratio (s0 / sigma)")->check(kPositive)->capture_default_str();
    s_sim->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
    s_sim->add_option("--protocol", sim.protocol, "Protocol CSV (default: built-in protocol)")->check(CLI::ExistingFile);
    s_sim->add_option("--out", sim.out, "Dataset CSV")->required();
    s_sim->add_flag("--allow-unphysical-fvasc", sim.allow_unphysical, "Sample f_ic + f_ees > 1 as well");

    FitArgs fit;
    auto* s_fit = app.add_subcommand("fit", "Estimate parameters with one engine");
    s_fit->add_option("method", fit.method, "nlls | supervised | ssverdict")
        ->required()
        ->check(CLI::IsMember({"nlls", "supervised", "ssverdict"}));
    s_fit->add_option("--in", fit.in, "Dataset or signal CSV")->required()->check(CLI::ExistingFile);
    s_fit->add_option("--out", fit.out, "Estimates CSV")->required();
    s_fit->add_option("--protocol", fit.protocol, "Protocol CSV (default: built-in protocol)")->check(CLI::ExistingFile);
    s_fit->add_option("--seed", fit.seed, "Training seed")->capture_default_str();
    s_fit->add_option("--model", fit.model_in, "Pretrained supervised model JSON")->check(CLI::ExistingFile);
    s_fit->add_option("--train-data", fit.train_data, "Dataset to train the supervised network on")->check(CLI::ExistingFile);
    s_fit->add_option("--model-out", fit.model_out, "Write the network model JSON");
    s_fit->add_option("--trace-out", fit.trace_out, "Training trace CSV (default: <out>.trace.csv)");
    s_fit->add_option("--starts", fit.nlls.starts, "NLLS starts from grid local minima")->check(kAtLeastOne)->capture_default_str();
    s_fit->add_option("--max-iterations", fit.nlls.max_iterations, "NLLS iteration cap")->check(kAtLeastOne)->capture_default_str();
    add_net_options(s_fit, fit.net);

    TrainArgs train;
    auto* s_train = app.add_subcommand("train-supervised", "Train the supervised network on a labelled dataset");
    s_train->add_option("--train-data", train.train_data, "Dataset CSV with ground truth")->required()->check(CLI::ExistingFile);
    s_train->add_option("--model-out", train.model_out, "Model JSON")->required();
    s_train->add_option("--trace-out", train.trace_out, "Training trace CSV (default: <model-out>.trace.csv)");
    s_train->add_option("--protocol", train.protocol, "Protocol CSV (default: built-in protocol)")->check(CLI::ExistingFile);
    s_train->add_option("--seed", train.seed, "Training seed")->capture_default_str();
    add_net_options(s_train, train.net);

    EvaluateArgs ev;
    auto* s_ev = app.add_subcommand("evaluate", "Compare estimates against ground truth");
    s_ev->add_option("--truth", ev.truth, "Dataset CSV with ground truth")->required()->check(CLI::ExistingFile);
    s_ev->add_option("--method", ev.methods, "name=estimates.csv (repeatable)")->required();
    s_ev->add_option("--out", ev.out_json, "Report JSON")->required();
    s_ev->add_option("--table", ev.out_table, "Text table (MSE, bias and variance blocks)");
    s_ev->add_option("--scatter-dir", ev.scatter_dir, "Directory for <method>_<param>.csv scatter tables");
    s_ev->add_option("--variance-mode", ev.variance_mode, "estimates | ground_truth | residuals")
        ->check(CLI::IsMember({"estimates", "ground_truth", "residuals"}))
        ->capture_default_str();

    SweepArgs sw;
    auto* s_sw = app.add_subcommand("sweep-snr", "Estimate - truth differences across SNR levels");
    s_sw->add_option("--snr", sw.snr, "SNR levels")->delimiter(',')->check(kPositive)->capture_default_str();
    s_sw->add_option("--n", sw.n, "Voxels per level")->check(kAtLeastOne)->capture_default_str();
    s_sw->add_option("--train-n", sw.train_n, "Supervised training voxels")->check(kAtLeastOne)->capture_default_str();
    s_sw->add_option("--train-snr", sw.train_snr, "SNR of the supervised training set, trained once (0: retrain at each level)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    s_sw->add_option("--seed", sw.seed, "Master seed")->capture_default_str();
    s_sw->add_option("--methods", sw.methods, "Methods to run")
        ->delimiter(',')
        ->check(CLI::IsMember({"nlls", "supervised", "ssverdict"}))
        ->capture_default_str();
    s_sw->add_option("--protocol", sw.protocol, "Protocol CSV (default: built-in protocol)")->check(CLI::ExistingFile);
    s_sw->add_option("--out", sw.out, "Long-format difference CSV")->required();
    s_sw->add_option("--summary", sw.summary, "Quartile summary CSV (default: <out>.summary.csv)");
    s_sw->add_option("--starts", sw.nlls.starts, "NLLS starts")->check(kAtLeastOne)->capture_default_str();
    add_net_options(s_sw, sw.net);

    std::string show_protocol, show_format = "table";
    auto* s_proto = app.add_subcommand("protocol", "Protocol utilities");
    s_proto->require_subcommand(1);
    auto* s_show = s_proto->add_subcommand("show", "Print the acquisition protocol");
    s_show->add_option("--protocol", show_protocol, "Protocol CSV (default: built-in protocol)")->check(CLI::ExistingFile);
    s_show->add_option("--format", show_format, "table | csv")->check(CLI::IsMember({"table", "csv"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "verdict: usage error: " << e.what() << "\n";
        return 2;
    }
    if (auto* cfg = app.get_config_ptr(); cfg && cfg->count() > 0) g.config_file = cfg->as<std::string>();

    try {
        if (s_sim->parsed()) return cmd_simulate(sim, g);
        if (s_fit->parsed()) return cmd_fit(fit, g);
        if (s_train->parsed()) return cmd_train_supervised(train, g);
        if (s_ev->parsed()) return cmd_evaluate(ev, g);
        if (s_sw->parsed()) return cmd_sweep_snr(sw, g);
        if (s_show->parsed()) return cmd_protocol_show(show_protocol, show_format);
    } catch (const UsageError& e) {
        std::cerr << "verdict: usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "verdict: error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
