// calib: command-line front end for the calibration library.
//
// Exit codes: 0 success, 2 invalid input or arguments, 3 an experiment cell
// (or a fit) failed at run time.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "calib/bounds.hpp"
#include "calib/dump.hpp"
#include "calib/ece.hpp"
#include "calib/error.hpp"
#include "calib/experiments.hpp"
#include "calib/recal.hpp"
#include "calib/synthetic.hpp"

using nlohmann::json;
using namespace calib;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitExperiment = 3;

struct Common {
    std::uint64_t seed = 0;
    std::string out;
    std::string format = "json";
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--seed", c.seed, "Master seed")->capture_default_str();
    app->add_option("--out", c.out, "Output path (stdout when omitted)");
    app->add_option("--format", c.format, "Output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
}

void emit(const Common& c, const std::string& text)
{
    if (c.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(c.out);
    if (!f)
        throw ValidationError("cannot write '" + c.out + "'");
    f << text;
}

json read_json_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ValidationError("cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

// Flat key,value CSV for scalar results.
std::string kv_csv(const json& j)
{
    std::ostringstream os;
    os << "key,value\n";
    for (const auto& [k, v] : j.items())
        if (v.is_primitive())
            os << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
    return os.str();
}

std::string render(const Common& c, const json& j)
{
    return c.format == "json" ? j.dump(2) + "\n" : kv_csv(j);
}

std::string render(const Common& c, const ExperimentReport& r)
{
    return c.format == "json" ? r.to_json().dump(2) + "\n" : r.to_csv();
}

struct DumpArgs {
    std::string path;
    std::string dump_format;
    std::string mode = "probs";
};

void add_dump(CLI::App* app, DumpArgs& d, bool required)
{
    auto* opt = app->add_option("--input", d.path, "Prediction dump (CSV or JSON-lines)");
    if (required)
        opt->required();
    app->add_option("--dump-format", d.dump_format, "csv or jsonl (default: by extension)")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    app->add_option("--mode", d.mode, "Scores stored in the dump")
        ->check(CLI::IsMember({"probs", "logits"}))
        ->capture_default_str();
}

DumpSource dump_source(const DumpArgs& d)
{
    DumpSource s;
    s.path = d.path;
    s.format = d.dump_format.empty() ? guess_dump_format(d.path) : dump_format_from_string(d.dump_format);
    s.mode = score_mode_from_string(d.mode);
    return s;
}

PredictionSet load(const DumpArgs& d)
{
    const auto s = dump_source(d);
    return load_dump(s.path, s.format, s.mode);
}

DataSource source_from(const std::string& spec_path, const DumpArgs& d)
{
    if (!spec_path.empty() && !d.path.empty())
        throw ValidationError("give either --spec or --input, not both");
    if (!spec_path.empty())
        return data_source_from_json(read_json_file(spec_path));
    if (!d.path.empty())
        return dump_source(d);
    throw ValidationError("one of --spec or --input is required");
}

// --------------------------------------------------------------------- ece

struct EceArgs {
    Common c;
    DumpArgs dump;
    std::optional<std::size_t> bins;
    std::string variant = "top";
    std::vector<int> classes;
};

int run_ece(const EceArgs& a)
{
    const auto data = load(a.dump);
    json out{{"n", data.size()}, {"num_classes", data.num_classes()}, {"variant", a.variant}};
    if (a.variant == "top") {
        const auto b = a.bins ? *a.bins : optimal_bins_1d(data.size());
        out["bins"] = b;
        out["ece"] = ece_top_label(data, b);
        out["accuracy"] = top_label_accuracy(data);
        out["brier"] = brier_score(data);
        out["cross_entropy"] = softmax_cross_entropy(data);
    } else if (a.variant == "full") {
        const auto b = a.bins ? *a.bins : optimal_bins_per_dim_k(data.size(), data.num_classes());
        out["bins_per_dim"] = b;
        out["ece"] = ece_full_k(data, b);
    } else {
        if (a.classes.empty())
            throw ValidationError("--variant partial needs --classes");
        const auto b = a.bins ? *a.bins : optimal_bins_per_dim_k(data.size(), a.classes.size());
        out["bins_per_dim"] = b;
        out["classes"] = a.classes;
        out["ece"] = ece_partial_k(data, a.classes, b);
    }
    emit(a.c, render(a.c, out));
    return 0;
}

// -------------------------------------------------------------- synthesize

struct SynthArgs {
    Common c;
    std::string spec;
    std::optional<std::size_t> n;
    bool seed_given = false;
    bool logits = false;
};

int run_synthesize(const SynthArgs& a)
{
    if (a.c.out.empty())
        throw ValidationError("synthesize needs --out");
    const auto j = read_json_file(a.spec);
    const auto mode = a.logits ? ScoreMode::Logits : ScoreMode::Probabilities;
    const auto format = a.c.format == "json" ? DumpFormat::JsonLines : DumpFormat::Csv;
    json meta;
    if (synthetic_kind(j) == "binary") {
        auto spec = spec_1d_from_json(j);
        if (a.n)
            spec.n = *a.n;
        if (a.seed_given)
            spec.seed = a.c.seed;
        spec.validate();
        write_dump(gen_binary(spec), a.c.out, format, mode);
        meta = {{"spec", to_json(spec)}, {"oracle_tce", true_tce(spec)}};
    } else {
        auto spec = spec_k_from_json(j);
        if (a.n)
            spec.n = *a.n;
        if (a.seed_given)
            spec.seed = a.c.seed;
        spec.validate();
        write_dump(gen_multiclass(spec), a.c.out, format, mode);
        meta = {{"spec", to_json(spec)}};
    }
    meta["out"] = a.c.out;
    std::cout << meta.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------------ bounds

struct BoundArgs {
    Common c;
    std::string kind = "total_bias_test";
    BoundInputs in;
    std::string lambda = "auto";
    double empirical_loss = 0.0;
    double empirical_brier = 0.0;
    std::string coverage_spec;
    std::size_t trials = 1000;
};

int run_bounds(BoundArgs a)
{
    const auto kind = bound_kind_from_string(a.kind);
    if (a.lambda == "heuristic") {
        a.in.lambda = heuristic_lambda(a.in);
    } else if (a.lambda != "auto") {
        try {
            a.in.lambda = std::stod(a.lambda);
        } catch (const std::exception&) {
            throw ValidationError("--lambda must be a number, 'auto' or 'heuristic'");
        }
    }
    const auto cert = evaluate_bound(kind, a.in, a.empirical_loss, a.empirical_brier);
    json out = to_json(cert);
    if (!a.coverage_spec.empty()) {
        auto spec = spec_1d_from_json(read_json_file(a.coverage_spec));
        spec.n = a.in.n;
        spec.seed = a.c.seed;
        const auto cov =
            mc_validate_bound(kind, spec, a.in.bins, a.in.epsilon, a.trials, cert.value);
        out["coverage"] = {{"trials", a.trials},
                           {"fraction", cov.coverage},
                           {"oracle_tce", cov.oracle_tce},
                           {"spec", to_json(spec)}};
    }
    if (a.c.format == "csv") {
        json flat = out;
        flat.erase("inputs");
        if (out.contains("coverage")) {
            flat.erase("coverage");
            flat["coverage"] = out["coverage"]["fraction"];
        }
        emit(a.c, kv_csv(flat));
    } else {
        emit(a.c, out.dump(2) + "\n");
    }
    return 0;
}

// ------------------------------------------------------------- recalibrate

struct RecalArgs {
    Common c;
    DumpArgs dump;
    std::string method = "pbr";
    std::string family = "temperature";
    std::optional<double> alpha;
    std::vector<double> alphas;
    std::string config;
    std::string apply;
    std::string apply_out;
};

int run_recalibrate(const RecalArgs& a)
{
    const auto data = load(a.dump);
    json out;
    std::optional<RecalMap> map;
    if (a.method == "temperature") {
        const auto fit = temperature_scaling_fit(data);
        map = fit.map;
        out = to_json(fit.map);
        out["nll"] = fit.nll;
        if (fit.warning) {
            out["warning"] = *fit.warning;
            std::cerr << "warning: " << *fit.warning << "\n";
        }
    } else {
        PbrConfig cfg = a.config.empty() ? PbrConfig{} : pbr_config_from_json(read_json_file(a.config));
        if (a.config.empty() || a.family != "temperature")
            cfg.family = recal_family_from_string(a.family);
        cfg.seed = a.c.seed;
        cfg.objective = a.method == "pbr" ? PbrObjective::BrierOnly : PbrObjective::BrierPlusLoss;
        if (a.alpha) {
            cfg.alpha = *a.alpha;
            cfg.validate();
            const auto fit = train_pbr(data, cfg);
            map = fit.map;
            out = to_json(fit);
        } else {
            const auto& grid = a.alphas.empty() ? default_alpha_grid() : a.alphas;
            const auto sel = train_pbr_alpha_grid(data, cfg, grid);
            map = sel.fits[sel.best].map;
            out = to_json(sel.fits[sel.best]);
            out["selected_alpha"] = sel.alphas[sel.best];
            out["alpha_grid"] = sel.alphas;
            out["recal_ece"] = sel.recal_ece;
        }
    }
    if (!a.apply.empty()) {
        if (a.apply_out.empty())
            throw ValidationError("--apply needs --apply-out");
        DumpArgs target = a.dump;
        target.path = a.apply;
        target.dump_format.clear();
        const auto applied = recalibrate(*map, load(target));
        write_dump(applied, a.apply_out, guess_dump_format(a.apply_out), ScoreMode::Probabilities);
        out["applied_to"] = a.apply;
        out["applied_out"] = a.apply_out;
    }
    if (a.c.format == "csv") {
        std::ostringstream os;
        os << "index,parameter\n";
        const auto p = map->params();
        for (std::size_t i = 0; i < p.size(); ++i)
            os << i << ',' << json(p[i]).dump() << '\n';
        emit(a.c, os.str());
    } else {
        emit(a.c, out.dump(2) + "\n");
    }
    return 0;
}

// -------------------------------------------------------------- experiment

struct ExperimentArgs {
    Common c;
    std::string spec;
    DumpArgs dump;
    bool serial = false;
    // convergence
    std::vector<std::size_t> n_grid;
    std::size_t seeds = 50;
    std::optional<std::size_t> fixed_bins;
    std::size_t oracle_samples = 1000000;
    // klgap / compare
    std::vector<double> alphas;
    std::size_t replicates = 10;
    std::optional<std::size_t> n_re;
    std::optional<std::size_t> bins;
    std::string family = "temperature";
    std::string pbr_config;
    std::vector<std::string> methods;
    std::size_t folds = 10;
    double recal_fraction = 0.1;
    // replay
    std::string report;
};

Execution execution(const ExperimentArgs& a)
{
    return a.serial ? Execution::Serial : Execution::Parallel;
}

PbrConfig pbr_from(const ExperimentArgs& a)
{
    PbrConfig cfg = a.pbr_config.empty() ? PbrConfig{} : pbr_config_from_json(read_json_file(a.pbr_config));
    if (a.pbr_config.empty() || a.family != "temperature")
        cfg.family = recal_family_from_string(a.family);
    return cfg;
}

int run_convergence(const ExperimentArgs& a)
{
    ConvergenceConfig cfg;
    if (a.spec.empty())
        throw ValidationError("convergence needs --spec");
    const auto j = read_json_file(a.spec);
    if (synthetic_kind(j) == "binary")
        cfg.spec = spec_1d_from_json(j);
    else
        cfg.spec = spec_k_from_json(j);
    if (!a.n_grid.empty())
        cfg.n_grid = a.n_grid;
    cfg.seeds = a.seeds;
    if (a.fixed_bins) {
        cfg.bin_rule = BinRule::Fixed;
        cfg.fixed_bins = *a.fixed_bins;
    }
    cfg.oracle_samples = a.oracle_samples;
    cfg.master_seed = a.c.seed;
    emit(a.c, render(a.c, convergence_experiment(cfg, execution(a))));
    return 0;
}

int run_klgap(const ExperimentArgs& a)
{
    KlGapConfig cfg;
    cfg.source = source_from(a.spec, a.dump);
    if (!a.alphas.empty())
        cfg.alpha_grid = a.alphas;
    cfg.replicates = a.replicates;
    if (a.n_re)
        cfg.n_re = *a.n_re;
    cfg.bins = a.bins;
    cfg.pbr = pbr_from(a);
    cfg.master_seed = a.c.seed;
    emit(a.c, render(a.c, kl_gap_experiment(cfg, execution(a))));
    return 0;
}

int run_compare(const ExperimentArgs& a)
{
    CompareConfig cfg;
    cfg.source = source_from(a.spec, a.dump);
    if (!a.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : a.methods)
            cfg.methods.push_back(method_from_string(m));
    }
    cfg.folds = a.folds;
    cfg.n_re = a.n_re;
    cfg.recal_fraction = a.recal_fraction;
    cfg.bins = a.bins;
    if (!a.alphas.empty())
        cfg.alpha_grid = a.alphas;
    cfg.pbr = pbr_from(a);
    cfg.master_seed = a.c.seed;
    emit(a.c, render(a.c, compare_methods(cfg, execution(a))));
    return 0;
}

int run_replay(const ExperimentArgs& a)
{
    emit(a.c, render(a.c, replay_report(read_json_file(a.report), execution(a))));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Calibration error estimation, PAC-Bayes bounds and recalibration"};
    app.require_subcommand(1);

    EceArgs ece;
    auto* ece_cmd = app.add_subcommand("ece", "ECE of a prediction dump");
    add_common(ece_cmd, ece.c);
    add_dump(ece_cmd, ece.dump, true);
    ece_cmd->add_option("--bins", ece.bins, "Bins (per dimension for full/partial)");
    ece_cmd->add_option("--variant", ece.variant, "top, full or partial")
        ->check(CLI::IsMember({"top", "full", "partial"}))
        ->capture_default_str();
    ece_cmd->add_option("--classes", ece.classes, "Class subset for --variant partial")
        ->delimiter(',');

    SynthArgs syn;
    auto* syn_cmd = app.add_subcommand("synthesize", "Write a synthetic dataset as a dump");
    add_common(syn_cmd, syn.c);
    syn_cmd->add_option("--spec", syn.spec, "Synthetic spec JSON")->required();
    syn_cmd->add_option("--n", syn.n, "Override the spec's sample size");
    syn_cmd->add_flag("--logits", syn.logits, "Write log-probabilities (z0..) instead of p0..");

    BoundArgs bnd;
    auto* bnd_cmd = app.add_subcommand("bounds", "Evaluate a bias / generalization bound");
    add_common(bnd_cmd, bnd.c);
    bnd_cmd->add_option("--kind", bnd.kind,
                        "total_bias_test, pac_bias_train, ce_k_bias, gen_recal, bias_recal, "
                        "joint_acc_tce")
        ->capture_default_str();
    bnd_cmd->add_option("--n", bnd.in.n)->required();
    bnd_cmd->add_option("--bins", bnd.in.bins)->required();
    bnd_cmd->add_option("--lipschitz", bnd.in.lipschitz)->capture_default_str();
    bnd_cmd->add_option("--epsilon", bnd.in.epsilon)->capture_default_str();
    bnd_cmd->add_option("--lambda", bnd.lambda, "Number, 'auto' or 'heuristic' (sqrt(B n))")
        ->capture_default_str();
    bnd_cmd->add_option("--kl", bnd.in.kl)->capture_default_str();
    bnd_cmd->add_option("--classes", bnd.in.num_classes)->capture_default_str();
    bnd_cmd->add_flag("--assume-density", bnd.in.assume_density);
    bnd_cmd->add_option("--empirical-loss", bnd.empirical_loss, "joint_acc_tce only");
    bnd_cmd->add_option("--empirical-brier", bnd.empirical_brier, "joint_acc_tce only");
    bnd_cmd->add_option("--coverage-spec", bnd.coverage_spec,
                        "Binary spec JSON: also estimate the bound's Monte Carlo coverage");
    bnd_cmd->add_option("--trials", bnd.trials)->capture_default_str();

    RecalArgs rec;
    auto* rec_cmd = app.add_subcommand("recalibrate", "Fit a recalibration map on a dump");
    add_common(rec_cmd, rec.c);
    add_dump(rec_cmd, rec.dump, true);
    rec_cmd->add_option("--method", rec.method)
        ->check(CLI::IsMember({"temperature", "pbr", "pbr_total"}))
        ->capture_default_str();
    rec_cmd->add_option("--family", rec.family, "temperature, vector_scale or affine")
        ->capture_default_str();
    rec_cmd->add_option("--alpha", rec.alpha, "Fixed alpha (skips the grid search)");
    rec_cmd->add_option("--alphas", rec.alphas, "Alpha grid")->delimiter(',');
    rec_cmd->add_option("--pbr-config", rec.config, "PBR config JSON");
    rec_cmd->add_option("--apply", rec.apply, "Dump to push through the fitted map");
    rec_cmd->add_option("--apply-out", rec.apply_out, "Where to write the recalibrated dump");

    auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment grid");
    exp_cmd->require_subcommand(1);
    ExperimentArgs ex;
    auto add_exp = [&](const char* name, const char* help) {
        auto* cmd = exp_cmd->add_subcommand(name, help);
        add_common(cmd, ex.c);
        cmd->add_flag("--serial", ex.serial, "Run cells on one thread");
        return cmd;
    };
    auto add_source = [&](CLI::App* cmd) {
        cmd->add_option("--spec", ex.spec, "Synthetic spec JSON");
        add_dump(cmd, ex.dump, false);
        cmd->add_option("--alphas", ex.alphas, "Alpha grid")->delimiter(',');
        cmd->add_option("--n-re", ex.n_re, "Recalibration split size");
        cmd->add_option("--bins", ex.bins, "Evaluation bins override");
        cmd->add_option("--family", ex.family)->capture_default_str();
        cmd->add_option("--pbr-config", ex.pbr_config, "PBR config JSON");
    };
    auto* conv = add_exp("convergence", "|oracle - ECE| across a grid of n");
    conv->add_option("--spec", ex.spec, "Synthetic spec JSON")->required();
    conv->add_option("--n-grid", ex.n_grid)->delimiter(',');
    conv->add_option("--seeds", ex.seeds)->capture_default_str();
    conv->add_option("--bins", ex.fixed_bins, "Fixed bins instead of the optimal rule");
    conv->add_option("--oracle-samples", ex.oracle_samples)->capture_default_str();
    auto* kl = add_exp("klgap", "Correlate KL(posterior || prior) with the ECE gap");
    add_source(kl);
    kl->add_option("--replicates", ex.replicates)->capture_default_str();
    auto* cmp = add_exp("compare", "Compare recalibration methods over folds");
    add_source(cmp);
    cmp->add_option("--methods", ex.methods)->delimiter(',');
    cmp->add_option("--folds", ex.folds)->capture_default_str();
    cmp->add_option("--recal-fraction", ex.recal_fraction)->capture_default_str();
    auto* rep = add_exp("replay", "Re-run an experiment from a report");
    rep->add_option("--report", ex.report)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }
    syn.seed_given = syn_cmd->count("--seed") > 0;

    try {
        if (*ece_cmd)
            return run_ece(ece);
        if (*syn_cmd)
            return run_synthesize(syn);
        if (*bnd_cmd)
            return run_bounds(bnd);
        if (*rec_cmd)
            return run_recalibrate(rec);
        if (*conv)
            return run_convergence(ex);
        if (*kl)
            return run_klgap(ex);
        if (*cmp)
            return run_compare(ex);
        if (*rep)
            return run_replay(ex);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ExperimentError& e) {
        std::cerr << "experiment failed: " << e.what() << "\n";
        return kExitExperiment;
    } catch (const std::exception& e) {
        std::cerr << "experiment failed: " << e.what() << "\n";
        return kExitExperiment;
    }
    return kExitValidation;
}
