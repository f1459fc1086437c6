// Command-line front end: trace profiling, model fitting, runtime prediction,
// hardware/input sweeps and synthetic workload generation.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bbcast/cli.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"basic-block runtime prediction toolkit"};
    app.require_subcommand(1);

    // profile
    bbcast::cli::ProfileOptions profile_opt;
    std::string profile_input;
    CLI::App* profile = app.add_subcommand(
        "profile", "compute reuse profiles and block counts from a trace");
    profile->add_option("trace", profile_opt.trace_path, "trace file")->required();
    profile->add_option("program", profile_opt.program_path, "program model file")
        ->required();
    profile->add_option("--sample-fraction", profile_opt.sample_fraction,
                        "fraction of block windows to sample, in (0,1]")
        ->capture_default_str();
    profile->add_option("--seed", profile_opt.seed, "sampling seed")->required();
    profile->add_option("--bins", profile_opt.bins,
                        "bin profiles to at most this many bins (0 = raw)")
        ->capture_default_str();
    profile->add_option("--line-bytes", profile_opt.line_bytes,
                        "cache line granularity for addresses (0 = raw)")
        ->capture_default_str();
    profile->add_option("--input", profile_input, "input point, e.g. n=64,k=4");
    profile->add_option("--out", profile_opt.out_path, "observation file to write")
        ->required();

    // fit
    bbcast::cli::FitOptions fit_opt;
    CLI::App* fit = app.add_subcommand(
        "fit", "fit scaling models from a directory of observations");
    fit->add_option("observations", fit_opt.observations_dir,
                    "directory of observation .json files")
        ->required();
    fit->add_option("--program", fit_opt.program_path, "structural program model file")
        ->required();
    fit->add_option("--degree", fit_opt.degree, "max polynomial degree")
        ->capture_default_str();
    fit->add_option("--penalty", fit_opt.penalty, "l1 penalty")->capture_default_str();
    fit->add_option("--bins", fit_opt.bins, "reuse-distance bin count")
        ->capture_default_str();
    fit->add_flag("--no-reciprocal-probs{false}", fit_opt.reciprocal_probs,
                  "fit branch probabilities without 1/param features");
    fit->add_option("--out", fit_opt.out_path, "fitted program model file to write")
        ->required();

    // predict
    bbcast::cli::PredictOptions predict_opt;
    std::string predict_input;
    CLI::App* predict = app.add_subcommand("predict", "predict runtime at an input point");
    predict->add_option("model", predict_opt.model_path, "fitted program model file")
        ->required();
    predict->add_option("hardware", predict_opt.hw_path, "hardware config file")
        ->required();
    predict->add_option("--input", predict_input, "input point, e.g. n=4096,k=10")
        ->required();
    predict->add_option("--profiles", predict_opt.profiles_path,
                        "observation file with measured profiles (overrides fitted bins)");
    predict->add_option("--report", predict_opt.report_path, "report JSON to write");

    // sweep
    bbcast::cli::SweepOptions sweep_opt;
    std::string sweep_input, sweep_values;
    CLI::App* sweep = app.add_subcommand("sweep", "one-axis sensitivity sweep");
    sweep->add_option("model", sweep_opt.model_path, "fitted program model file")
        ->required();
    sweep->add_option("hardware", sweep_opt.hw_path, "hardware config file")->required();
    sweep->add_option("--axis", sweep_opt.axis,
                      "l<N>.size | pipeline.<class>.count | input.<param>")
        ->required();
    sweep->add_option("--values", sweep_values, "comma-separated values; K/M suffixes ok")
        ->required();
    sweep->add_option("--input", sweep_input, "base input point");
    sweep->add_option("--profiles", sweep_opt.profiles_path,
                      "observation file with measured profiles");
    sweep->add_option("--csv", sweep_opt.csv_path, "CSV file to write");

    // synth
    bbcast::cli::SynthOptions synth_opt;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic workload");
    synth->add_option("kind", synth_opt.kind, "matmul | stencil2d | saxpy")->required();
    synth->add_option("sizes", synth_opt.sizes, "kernel sizes")->required();
    synth->add_option("--out", synth_opt.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (profile->parsed()) {
            profile_opt.input_point = bbcast::cli::parse_input_point(profile_input);
            bbcast::cli::run_profile(profile_opt);
        } else if (fit->parsed()) {
            bbcast::cli::run_fit(fit_opt);
        } else if (predict->parsed()) {
            predict_opt.input_point = bbcast::cli::parse_input_point(predict_input);
            const bbcast::PredictionReport report = bbcast::cli::run_predict(predict_opt);
            std::printf("total_runtime_s %.9e\n", report.total_runtime_s);
            for (std::size_t i = 0; i < report.effective_memory.hit_rates.size(); ++i)
                std::printf("l%zu_hit %.6f\n", i + 1, report.effective_memory.hit_rates[i]);
        } else if (sweep->parsed()) {
            sweep_opt.input_point = bbcast::cli::parse_input_point(sweep_input);
            sweep_opt.values = bbcast::cli::parse_value_list(sweep_values);
            const auto rows = bbcast::cli::run_sweep(sweep_opt);
            if (sweep_opt.csv_path.empty()) std::fputs(bbcast::sweep_csv(rows).c_str(), stdout);
            for (const bbcast::SweepRow& row : rows)
                if (row.error)
                    std::fprintf(stderr, "sweep value %g: %s\n", row.axis_value,
                                 row.error->c_str());
        } else if (synth->parsed()) {
            const auto paths = bbcast::cli::run_synth(synth_opt);
            std::printf("%s\n%s\n%s\n", paths.program.c_str(), paths.trace.c_str(),
                        paths.truth.c_str());
        }
    } catch (const bbcast::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
