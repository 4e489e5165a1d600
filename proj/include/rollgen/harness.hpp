#pragma once

#include "rollgen/analyzer.hpp"
#include "rollgen/orchestrator.hpp"
#include "rollgen/provider.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rollgen {

struct task_spec {
    std::string task_id;
    std::string prompt;
    std::vector<test_case> public_tests;
    std::vector<test_case> private_tests;  // every entry has an expected output
    std::optional<std::string> entry_point;

    // The view handed to generation.
    generation_task redacted() const;

    static task_spec from_json(const nlohmann::json & j);
    nlohmann::json to_json() const;
};

// One task per line; blank lines are skipped.
std::vector<task_spec> parse_tasks(std::string_view jsonl);
std::vector<task_spec> load_tasks(const std::string & path);

enum class run_mode { rocode, plain, filtering };

std::string_view to_string(run_mode m);
run_mode parse_run_mode(std::string_view s);

struct sample_record {
    std::string final_code;
    bool compilable = false;
    std::vector<bool> test_results;  // private tests, in task order
    std::size_t tokens_consumed = 0;
    std::size_t rollback_count = 0;
    std::size_t candidates = 1;  // filtering mode: samples drawn
    session_status status = session_status::eos;
    std::string error;

    std::size_t tests_passed() const;
    std::size_t tests_total() const { return test_results.size(); }
    bool passed() const { return tests_passed() == tests_total(); }
};

struct task_record {
    std::string task_id;
    std::vector<sample_record> samples;
};

struct metrics {
    double pass_rate = 0.0;
    std::optional<double> avg_pass_ratio;  // absent when no task has private tests
    double ccp = 0.0;
};

// Mean over tasks of 1 - C(n - c, 1) / C(n, 1).
double pass_rate(std::span<const task_record> tasks);
// Per-test pass fraction, averaged over samples and then over tasks. Tasks
// without tests are skipped and named in `warnings`.
std::optional<double> avg_pass_ratio(std::span<const task_record> tasks, std::vector<std::string> * warnings = nullptr);
// Compilable samples over all samples.
double ccp(std::span<const task_record> tasks);
metrics compute_metrics(std::span<const task_record> tasks, std::vector<std::string> * warnings = nullptr);

// Compile check and private-test execution of a finished program.
void evaluate_sample(sample_record & sample, const task_spec & task, analyzer & backend, const session_config & config);

using analyzer_factory = std::function<std::unique_ptr<analyzer>()>;

struct benchmark_options {
    run_mode mode = run_mode::rocode;
    session_config config;
    int samples = 1;
    int trials = 1;
    int parallelism = 1;
};

struct trial_result {
    int trial = 0;
    std::uint64_t seed = 0;
    std::vector<task_record> tasks;  // sorted by task_id
    metrics scores;
};

struct benchmark_result {
    benchmark_options options;
    std::vector<trial_result> trials;
    metrics mean;  // averaged over trials
    std::vector<std::string> warnings;
    // Candidates surfaced per step by the provider; entropies are computed
    // over this support. 0 means the full vocabulary.
    std::size_t provider_support = 0;

    bool infrastructure_failure() const;
};

// Runs one task under the mode and returns its evaluated samples; failures
// are recorded in the samples, never thrown.
task_record run_task(const task_spec & task, token_provider & provider, analyzer & backend,
                     const benchmark_options & options, std::uint64_t seed);

benchmark_result run_benchmark(std::span<const task_spec> tasks, token_provider & provider,
                               const analyzer_factory & make_analyzer, const benchmark_options & options);

nlohmann::json to_json(const benchmark_result & result);
benchmark_result benchmark_from_json(const nlohmann::json & j);

// Metrics recomputed from the per-sample records of a results document.
metrics recompute(const benchmark_result & result);

std::string summary(const benchmark_result & result);

std::uint64_t sample_seed(std::uint64_t trial_seed, std::size_t task_index, int sample);

} // namespace rollgen
