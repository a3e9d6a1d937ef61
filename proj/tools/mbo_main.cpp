#include "mbo/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

int cmd_run(const std::string& task, const std::string& method, int k, int trials,
            std::uint64_t seed, const std::string& out, const std::string& format,
            const std::vector<std::string>& method_opts) {
    mbo::RunConfig cfg;
    cfg.task = task;
    cfg.method = method;
    cfg.method_cfg = mbo::default_method_config(method);
    cfg.k = k;
    cfg.trials = trials;
    cfg.base_seed = seed;
    cfg.output_path = out;
    for (const auto& opt : method_opts) {
        const auto eq = opt.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--method-opt", "expected key=value, got '" + opt + "'");
        mbo::apply_method_option(cfg.method_cfg, opt.substr(0, eq), opt.substr(eq + 1));
    }

    mbo::RunRecord record = mbo::run(cfg);
    if (!out.empty()) mbo::save_results(record, out);

    std::map<std::string, mbo::AggregateReport> reports;
    reports[method] = record.report;
    reports["dataset-best"] = record.dataset_best;
    json meta;
    meta["task"] = task;
    meta["k"] = k;
    meta["trials"] = trials;
    meta["base_seed"] = seed;
    meta["method_cfg"] = mbo::method_config_to_json(cfg.method_cfg);
    std::cout << mbo::emit_report(reports, format, meta);
    return 0;
}

int cmd_histogram(const std::string& task_name, std::size_t n, int bins, std::uint64_t seed,
                  const std::string& out) {
    const mbo::Task task = mbo::make_task(task_name);
    const mbo::Dataset dataset = mbo::build_dataset(task, seed);
    const mbo::HistogramPair h = mbo::resample_histogram(task, dataset, n, bins, seed + 1);

    json j;
    j["task"] = task_name;
    j["n"] = n;
    j["bins"] = bins;
    j["seed"] = seed;
    j["edges"] = std::vector<double>(h.edges.data(), h.edges.data() + h.edges.size());
    j["dataset_counts"] = h.dataset_counts;
    j["resampled_counts"] = h.resampled_counts;
    j["dataset_mean"] = h.dataset_mean;
    j["resampled_mean"] = h.resampled_mean;
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("histogram: cannot open " + out);
        f << j.dump(2) << "\n";
    }
    std::cout << "dataset mean score:   " << h.dataset_mean << "\n"
              << "resampled mean score: " << h.resampled_mean << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format) {
    std::vector<mbo::RunRecord> records;
    std::set<std::string> tasks;
    for (const auto& path : inputs) {
        records.push_back(mbo::load_results(path));
        tasks.insert(records.back().config.task);
    }

    json meta;
    meta["inputs"] = inputs;
    meta["tasks"] = std::vector<std::string>(tasks.begin(), tasks.end());

    std::map<std::string, mbo::AggregateReport> reports;
    if (tasks.size() == 1) {
        for (const auto& record : records) {
            reports[record.config.method] = record.report;
            // All records of one task share the same reference statistics.
            reports["dataset-best"] = record.dataset_best;
        }
        std::cout << mbo::emit_report(reports, format, meta);
        return 0;
    }

    // Several tasks: pool normalized scores per method with equal task weight
    // (stratified bootstrap within tasks). Methods must cover every task.
    auto trial_values = [](const std::vector<mbo::TrialResult>& trials, bool top) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(trials.size()));
        for (std::size_t i = 0; i < trials.size(); ++i)
            v[static_cast<Eigen::Index>(i)] = top ? trials[i].p100 : trials[i].p50;
        return v;
    };
    std::map<std::string, std::map<std::string, const mbo::RunRecord*>> by_method;
    for (const auto& record : records) {
        by_method[record.config.method][record.config.task] = &record;
        by_method["dataset-best"][record.config.task] = &record;
    }
    for (const auto& [method, per_task] : by_method) {
        if (per_task.size() != tasks.size()) {
            std::cerr << "note: skipping " << method << " (missing from some tasks)\n";
            continue;
        }
        std::vector<Eigen::VectorXd> strata100, strata50;
        for (const auto& [task, record] : per_task) {
            const auto& trials =
                method == "dataset-best" ? record->dataset_best_trials : record->trials;
            strata100.push_back(trial_values(trials, true));
            strata50.push_back(trial_values(trials, false));
        }
        mbo::AggregateReport rep;
        rep.p100 = mbo::aggregate_pooled(strata100, 515);
        rep.p50 = mbo::aggregate_pooled(strata50, 1515);
        reports[method] = rep;
    }
    std::cout << mbo::emit_report(reports, format, meta);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline model-based optimization benchmark harness"};
    app.require_subcommand(1);

    auto* list_tasks = app.add_subcommand("list-tasks", "List available tasks");
    auto* list_methods = app.add_subcommand("list-methods", "List available methods");

    std::string task, method, out, format = "markdown";
    int k = 128, trials = 8, bins = 40;
    std::uint64_t seed = 0;
    std::size_t n = 3200;
    std::vector<std::string> method_opts;

    auto* run_cmd = app.add_subcommand("run", "Run one method on one task");
    run_cmd->add_option("--task", task, "Task name")->required();
    run_cmd->add_option("--method", method, "Method name")->required();
    run_cmd->add_option("--k", k, "Candidates per trial");
    run_cmd->add_option("--trials", trials, "Independent trials");
    run_cmd->add_option("--seed", seed, "Base seed; trial i uses seed+i");
    run_cmd->add_option("--out", out, "Results file (JSON)");
    run_cmd->add_option("--format", format, "Report format: json|markdown");
    run_cmd->add_option("--method-opt", method_opts, "Method option key=value (repeatable)");

    auto* hist_cmd = app.add_subcommand("histogram", "Dataset-vs-uniform score histogram");
    hist_cmd->add_option("--task", task, "Task name")->required();
    hist_cmd->add_option("--n", n, "Uniform resample size");
    hist_cmd->add_option("--bins", bins, "Histogram bins");
    hist_cmd->add_option("--seed", seed, "Dataset/resample seed");
    hist_cmd->add_option("--out", out, "Histogram file (JSON)");

    std::vector<std::string> inputs;
    auto* report_cmd = app.add_subcommand("report", "Merge saved results into one report");
    report_cmd->add_option("--in", inputs, "Result files")->required();
    report_cmd->add_option("--format", format, "Report format: json|markdown");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // 1 on usage errors, 0 for --help
    }

    try {
        if (list_tasks->parsed()) {
            for (const auto& name : mbo::task_names()) std::cout << name << "\n";
            return 0;
        }
        if (list_methods->parsed()) {
            for (const auto& name : mbo::method_names()) std::cout << name << "\n";
            return 0;
        }
        if (run_cmd->parsed()) return cmd_run(task, method, k, trials, seed, out, format, method_opts);
        if (hist_cmd->parsed()) return cmd_histogram(task, n, bins, seed, out);
        if (report_cmd->parsed()) return cmd_report(inputs, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
