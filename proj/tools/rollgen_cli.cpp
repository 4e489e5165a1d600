#include "rollgen/harness.hpp"
#include "rollgen/stub_sandbox.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

using json = nlohmann::json;
using namespace rollgen;

namespace {

struct cli_options {
    std::string tasks;
    std::string task;
    std::string mode = "rocode";
    std::string policy = "greedy";
    double lambda = 0.9;
    int budget_multiplier = 2;
    int max_len = 512;
    int repeat_threshold = 5;
    std::uint64_t seed = 0;
    int trials = 1;
    int samples = 1;
    int parallelism = 1;
    std::string provider;
    std::string out;
    std::string stub_rules;
    std::string constraint = "decay";
    std::string rollback = "strategic";
    int timeout_ms = 2000;
    int top_n = 20;
    std::string eos_text = "</s>";
};

void add_common(CLI::App & cmd, cli_options & o) {
    cmd.add_option("--tasks", o.tasks, "task file (JSON lines)")->required()->check(CLI::ExistingFile);
    cmd.add_option("--provider", o.provider, "scripted:<file> or remote:<url>")->required();
    cmd.add_option("--mode", o.mode, "rocode, plain or filtering")->capture_default_str();
    cmd.add_option("--policy", o.policy, "greedy, temp:T, topk:K or nucleus:P")->capture_default_str();
    cmd.add_option("--lambda", o.lambda, "penalty decay factor")->capture_default_str();
    cmd.add_option("--budget-multiplier", o.budget_multiplier, "token budget in units of --max-len")
        ->capture_default_str();
    cmd.add_option("--max-len", o.max_len, "maximum generation length in tokens")->capture_default_str();
    cmd.add_option("--repeat-threshold", o.repeat_threshold, "same-kind statement run that counts as repetition")
        ->capture_default_str();
    cmd.add_option("--seed", o.seed, "base seed")->capture_default_str();
    cmd.add_option("--samples", o.samples, "samples per task")->capture_default_str();
    cmd.add_option("--out", o.out, "write the JSON result here instead of stdout");
    cmd.add_option("--stub-rules", o.stub_rules, "fault rules for the built-in stub analyzer")
        ->check(CLI::ExistingFile);
    cmd.add_option("--constraint", o.constraint, "decay, none or block")->capture_default_str();
    cmd.add_option("--rollback", o.rollback, "strategic, full_restart, error_statement or entropy_statement")
        ->capture_default_str();
    cmd.add_option("--timeout-ms", o.timeout_ms, "per-check execution timeout")->capture_default_str();
    cmd.add_option("--top-n", o.top_n, "remote provider: candidates per step")->capture_default_str();
    cmd.add_option("--eos-text", o.eos_text, "remote provider: end-of-sequence token text")->capture_default_str();
}

session_config make_config(const cli_options & o) {
    session_config c;
    c.lambda                = o.lambda;
    c.budget_multiplier     = o.budget_multiplier;
    c.max_generation_length = o.max_len;
    c.policy                = sampling_policy::parse(o.policy);
    c.seed                  = o.seed;
    c.repeat_threshold      = o.repeat_threshold;
    c.timeout_ms            = o.timeout_ms;
    c.constraint            = parse_constraint_mode(o.constraint);
    c.rollback              = parse_rollback_variant(o.rollback);
    c.validate();
    return c;
}

std::vector<std::string> split_words(const std::string & s) {
    std::istringstream in(s);
    std::vector<std::string> words;
    for (std::string w; in >> w;) {
        words.push_back(w);
    }
    return words;
}

// ROLLGEN_SANDBOX names a worker command; without it the stub runs in-process.
analyzer_factory make_analyzer_factory(const cli_options & o) {
    if (const auto command = process_analyzer::sandbox_from_env()) {
        const auto argv = split_words(*command);
        if (argv.empty()) {
            throw std::invalid_argument("ROLLGEN_SANDBOX is empty");
        }
        return [argv] { return std::make_unique<process_analyzer>(argv); };
    }
    auto stub = std::make_shared<stub_sandbox>(o.stub_rules.empty() ? stub_sandbox() : stub_sandbox::load(o.stub_rules));
    return [stub] {
        struct owning_stub : wire_analyzer {
            explicit owning_stub(std::shared_ptr<stub_sandbox> s)
                : wire_analyzer([s](std::string_view line) { return s->handle_line(line); }) {}
        };
        return std::make_unique<owning_stub>(stub);
    };
}

void emit(const json & doc, const std::string & out) {
    if (out.empty()) {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) {
        throw std::runtime_error("cannot write '" + out + "'");
    }
    f << doc.dump(2) << '\n';
}

int run_gen(const cli_options & o) {
    const auto tasks = load_tasks(o.tasks);
    const task_spec * task = nullptr;
    for (const auto & t : tasks) {
        if (o.task.empty() || t.task_id == o.task) {
            task = &t;
            break;
        }
    }
    if (task == nullptr) {
        throw std::invalid_argument(o.task.empty() ? "task file is empty" : "no task '" + o.task + "'");
    }

    remote_options ro;
    ro.top_n    = static_cast<std::size_t>(o.top_n);
    ro.eos_text = o.eos_text;
    auto provider = make_provider(o.provider, ro);
    auto backend  = make_analyzer_factory(o)();

    benchmark_options bo;
    bo.mode    = parse_run_mode(o.mode);
    bo.config  = make_config(o);
    bo.samples = o.samples;
    const task_record record = run_task(*task, *provider, *backend, bo, o.seed);

    json samples = json::array();
    bool infra = false;
    for (const auto & s : record.samples) {
        infra = infra || s.status == session_status::infrastructure_error;
        json j{{"final_code", s.final_code},       {"status", to_string(s.status)},
               {"compilable", s.compilable},       {"tests_passed", s.tests_passed()},
               {"tests_total", s.tests_total()},   {"tokens_consumed", s.tokens_consumed},
               {"rollback_count", s.rollback_count}};
        if (!s.error.empty()) {
            j["error"] = s.error;
        }
        samples.push_back(std::move(j));
    }
    emit(json{{"task_id", record.task_id}, {"mode", o.mode}, {"samples", samples}}, o.out);
    return infra ? 2 : 0;
}

int run_bench(const cli_options & o) {
    const auto tasks = load_tasks(o.tasks);
    remote_options ro;
    ro.top_n    = static_cast<std::size_t>(o.top_n);
    ro.eos_text = o.eos_text;
    auto provider = make_provider(o.provider, ro);

    benchmark_options bo;
    bo.mode        = parse_run_mode(o.mode);
    bo.config      = make_config(o);
    bo.samples     = o.samples;
    bo.trials      = o.trials;
    bo.parallelism = o.parallelism;
    const benchmark_result result = run_benchmark(tasks, *provider, make_analyzer_factory(o), bo);

    emit(to_json(result), o.out);
    std::cerr << summary(result);
    return result.infrastructure_failure() ? 2 : 0;
}

int run_report(const std::string & path, bool as_json) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open results file '" + path + "'");
    }
    benchmark_result result = benchmark_from_json(json::parse(in));
    const metrics again     = recompute(result);
    const bool consistent   = again.pass_rate == result.mean.pass_rate && again.ccp == result.mean.ccp &&
                            again.avg_pass_ratio == result.mean.avg_pass_ratio;
    if (as_json) {
        std::cout << to_json(result).at("metrics").dump(2) << '\n';
    } else {
        std::cout << summary(result);
    }
    if (!consistent) {
        std::cerr << "warning: stored metrics differ from the per-sample records\n";
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Rollback-driven code generation with incremental program checks"};
    app.require_subcommand(1);
    cli_options o;

    auto * gen = app.add_subcommand("gen", "generate code for one task");
    add_common(*gen, o);
    gen->add_option("--task", o.task, "task id (default: first task)");

    auto * bench = app.add_subcommand("bench", "run a benchmark sweep");
    add_common(*bench, o);
    bench->add_option("--trials", o.trials, "repeat trials with seeds seed, seed+1, ...")->capture_default_str();
    bench->add_option("-j,--parallel", o.parallelism, "concurrent tasks")->capture_default_str();

    std::string results;
    bool as_json = false;
    auto * report = app.add_subcommand("report", "summarize a results file");
    report->add_option("results", results, "results JSON from bench")->required()->check(CLI::ExistingFile);
    report->add_flag("--json", as_json, "print the metrics as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            return run_gen(o);
        }
        if (*bench) {
            return run_bench(o);
        }
        return run_report(results, as_json);
    } catch (const std::exception & e) {
        std::cerr << "rollgen: " << e.what() << '\n';
        return 1;
    }
}
