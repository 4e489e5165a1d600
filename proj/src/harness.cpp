#include "rollgen/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

using json = nlohmann::json;

namespace rollgen {

namespace {

test_case test_from_json(const json & j) {
    test_case t;
    t.input = j.value("input", std::string());
    if (j.contains("expected_output") && !j.at("expected_output").is_null()) {
        t.expected_output = j.at("expected_output").get<std::string>();
    }
    return t;
}

json test_to_json(const test_case & t) {
    json j{{"input", t.input}};
    if (t.expected_output) {
        j["expected_output"] = *t.expected_output;
    }
    return j;
}

} // namespace

generation_task task_spec::redacted() const {
    return generation_task{task_id, prompt, public_tests, entry_point};
}

task_spec task_spec::from_json(const json & j) {
    task_spec t;
    t.task_id = j.at("task_id").get<std::string>();
    t.prompt  = j.at("prompt").get<std::string>();
    for (const auto & x : j.value("public_tests", json::array())) {
        t.public_tests.push_back(test_from_json(x));
    }
    for (const auto & x : j.value("private_tests", json::array())) {
        t.private_tests.push_back(test_from_json(x));
        if (!t.private_tests.back().expected_output) {
            throw std::invalid_argument("task " + t.task_id + ": private tests need an expected_output");
        }
    }
    if (j.contains("entry_point") && !j.at("entry_point").is_null()) {
        t.entry_point = j.at("entry_point").get<std::string>();
    }
    return t;
}

json task_spec::to_json() const {
    json pub = json::array();
    for (const auto & t : public_tests) {
        pub.push_back(test_to_json(t));
    }
    json priv = json::array();
    for (const auto & t : private_tests) {
        priv.push_back(test_to_json(t));
    }
    json j{{"task_id", task_id}, {"prompt", prompt}, {"public_tests", pub}, {"private_tests", priv}};
    if (entry_point) {
        j["entry_point"] = *entry_point;
    }
    return j;
}

std::vector<task_spec> parse_tasks(std::string_view jsonl) {
    std::vector<task_spec> tasks;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            tasks.push_back(task_spec::from_json(json::parse(line)));
        } catch (const std::exception & e) {
            throw std::invalid_argument("task file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return tasks;
}

std::vector<task_spec> load_tasks(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open task file '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_tasks(buf.str());
}

std::string_view to_string(run_mode m) {
    switch (m) {
        case run_mode::rocode:    return "rocode";
        case run_mode::plain:     return "plain";
        case run_mode::filtering: return "filtering";
    }
    return "rocode";
}

run_mode parse_run_mode(std::string_view s) {
    for (auto m : {run_mode::rocode, run_mode::plain, run_mode::filtering}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown mode '" + std::string(s) + "' (rocode, plain, filtering)");
}

std::size_t sample_record::tests_passed() const {
    return static_cast<std::size_t>(std::count(test_results.begin(), test_results.end(), true));
}

//
// metrics
//

double pass_rate(std::span<const task_record> tasks) {
    if (tasks.empty()) {
        throw std::invalid_argument("pass_rate: no tasks");
    }
    double sum = 0.0;
    for (const auto & t : tasks) {
        const auto n = t.samples.size();
        if (n == 0) {
            throw std::invalid_argument("pass_rate: task " + t.task_id + " has no samples");
        }
        const auto c = static_cast<std::size_t>(
            std::count_if(t.samples.begin(), t.samples.end(), [](const sample_record & s) { return s.passed(); }));
        // C(n - c, 1) / C(n, 1)
        sum += 1.0 - static_cast<double>(n - c) / static_cast<double>(n);
    }
    return sum / static_cast<double>(tasks.size());
}

std::optional<double> avg_pass_ratio(std::span<const task_record> tasks, std::vector<std::string> * warnings) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto & t : tasks) {
        if (t.samples.empty()) {
            throw std::invalid_argument("avg_pass_ratio: task " + t.task_id + " has no samples");
        }
        if (t.samples.front().tests_total() == 0) {
            if (warnings != nullptr) {
                warnings->push_back("task " + t.task_id + " has no private tests; excluded from avg_pass_ratio");
            }
            continue;
        }
        double per_task = 0.0;
        for (const auto & s : t.samples) {
            per_task += static_cast<double>(s.tests_passed()) / static_cast<double>(s.tests_total());
        }
        sum += per_task / static_cast<double>(t.samples.size());
        ++counted;
    }
    if (counted == 0) {
        return std::nullopt;
    }
    return sum / static_cast<double>(counted);
}

double ccp(std::span<const task_record> tasks) {
    std::size_t total       = 0;
    std::size_t compilable = 0;
    for (const auto & t : tasks) {
        for (const auto & s : t.samples) {
            ++total;
            compilable += s.compilable ? 1 : 0;
        }
    }
    if (total == 0) {
        throw std::invalid_argument("ccp: no samples");
    }
    return static_cast<double>(compilable) / static_cast<double>(total);
}

metrics compute_metrics(std::span<const task_record> tasks, std::vector<std::string> * warnings) {
    return metrics{pass_rate(tasks), avg_pass_ratio(tasks, warnings), ccp(tasks)};
}

//
// running tasks
//

std::uint64_t sample_seed(std::uint64_t trial_seed, std::size_t task_index, int sample) {
    // splitmix64 over the three coordinates
    std::uint64_t z = trial_seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(task_index) * 1000003ULL +
                                                              static_cast<std::uint64_t>(sample) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

analyze_request make_request(analyze_mode mode, const std::string & code, const session_config & config) {
    analyze_request r;
    r.mode            = mode;
    r.code            = code;
    r.timeout_ms      = config.timeout_ms;
    r.memory_limit_mb = config.memory_limit_mb;
    return r;
}

bool compiles(const std::string & code, analyzer & backend, const session_config & config) {
    return !backend.analyze(make_request(analyze_mode::compile, code, config)).report.failed();
}

bool passes(const std::string & code, const test_case & test, analyzer & backend, const session_config & config) {
    analyze_request r = make_request(test.expected_output ? analyze_mode::run_tests : analyze_mode::run, code, config);
    r.test_input      = test.input;
    r.expected_output = test.expected_output;
    return !backend.analyze(r).report.failed();
}

sample_record from_result(const generation_result & g) {
    sample_record s;
    s.final_code      = g.final_code;
    s.tokens_consumed = g.tokens_consumed;
    s.rollback_count  = g.rollback_count;
    s.status          = g.status;
    s.error           = g.message;
    return s;
}

// Filtering: unchecked samples until the token budget is spent; keep the one
// passing the most public tests (compilable first, earliest on ties).
sample_record filtered_sample(const task_spec & task, token_provider & provider, analyzer & backend,
                              const session_config & config, std::uint64_t seed) {
    const generation_task view = task.redacted();
    const std::size_t budget   = config.budget();
    const auto max_len         = static_cast<std::size_t>(config.max_generation_length);

    std::size_t spent = 0;
    std::size_t drawn = 0;
    std::optional<sample_record> best;
    std::pair<int, std::size_t> best_score{-1, 0};
    while (spent < budget) {
        const std::size_t limit  = std::min(max_len, budget - spent);
        const generation_result g = generate_plain(view, provider, config.policy, seed + drawn, limit);
        spent += g.tokens_consumed;
        ++drawn;
        if (g.status == session_status::infrastructure_error) {
            sample_record s = from_result(g);
            s.tokens_consumed = spent;
            s.candidates      = drawn;
            return s;
        }

        const bool ok = compiles(g.final_code, backend, config);
        std::size_t public_passed = 0;
        if (ok) {
            for (const auto & t : view.public_tests) {
                public_passed += passes(g.final_code, t, backend, config) ? 1 : 0;
            }
        }
        const std::pair<int, std::size_t> score{ok ? 1 : 0, public_passed};
        if (score > best_score) {
            best_score = score;
            best       = from_result(g);
        }
        if (ok && public_passed == view.public_tests.size()) {
            break;
        }
        if (g.tokens_consumed == 0) {
            break;
        }
    }
    sample_record s   = best ? *best : sample_record{};
    s.tokens_consumed = spent;
    s.candidates      = drawn;
    return s;
}

} // namespace

void evaluate_sample(sample_record & sample, const task_spec & task, analyzer & backend, const session_config & config) {
    sample.compilable = compiles(sample.final_code, backend, config);
    sample.test_results.assign(task.private_tests.size(), false);
    if (!sample.compilable) {
        return;
    }
    for (std::size_t i = 0; i < task.private_tests.size(); ++i) {
        sample.test_results[i] = passes(sample.final_code, task.private_tests[i], backend, config);
    }
}

task_record run_task(const task_spec & task, token_provider & provider, analyzer & backend,
                     const benchmark_options & options, std::uint64_t seed) {
    task_record record{task.task_id, {}};
    for (int n = 0; n < options.samples; ++n) {
        session_config config = options.config;
        config.seed           = seed + static_cast<std::uint64_t>(n);
        sample_record s;
        try {
            switch (options.mode) {
                case run_mode::rocode:
                    s = from_result(generate(task.redacted(), provider, backend, config));
                    break;
                case run_mode::plain:
                    s = from_result(generate_plain(task.redacted(), provider, config.policy, config.seed,
                                                   static_cast<std::size_t>(config.max_generation_length)));
                    break;
                case run_mode::filtering:
                    s = filtered_sample(task, provider, backend, config, config.seed);
                    break;
            }
            evaluate_sample(s, task, backend, config);
        } catch (const std::exception & e) {
            s.status = session_status::infrastructure_error;
            s.error  = e.what();
            s.compilable = false;
            s.test_results.assign(task.private_tests.size(), false);
        }
        record.samples.push_back(std::move(s));
    }
    return record;
}

bool benchmark_result::infrastructure_failure() const {
    for (const auto & t : trials) {
        for (const auto & task : t.tasks) {
            for (const auto & s : task.samples) {
                if (s.status == session_status::infrastructure_error) {
                    return true;
                }
            }
        }
    }
    return false;
}

namespace {

metrics mean_metrics(std::span<const trial_result> trials) {
    metrics m;
    double apr       = 0.0;
    std::size_t napr = 0;
    for (const auto & t : trials) {
        m.pass_rate += t.scores.pass_rate;
        m.ccp += t.scores.ccp;
        if (t.scores.avg_pass_ratio) {
            apr += *t.scores.avg_pass_ratio;
            ++napr;
        }
    }
    const auto n = static_cast<double>(trials.size());
    m.pass_rate /= n;
    m.ccp /= n;
    if (napr > 0) {
        m.avg_pass_ratio = apr / static_cast<double>(napr);
    }
    return m;
}

} // namespace

benchmark_result run_benchmark(std::span<const task_spec> tasks, token_provider & provider,
                               const analyzer_factory & make_analyzer, const benchmark_options & options) {
    options.config.validate();
    if (options.samples < 1 || options.trials < 1 || options.parallelism < 1) {
        throw std::invalid_argument("samples, trials and parallelism must be >= 1");
    }
    if (tasks.empty()) {
        throw std::invalid_argument("no tasks to run");
    }

    benchmark_result result;
    result.options          = options;
    result.provider_support = provider.support_size();

    for (int trial = 0; trial < options.trials; ++trial) {
        trial_result tr;
        tr.trial = trial;
        tr.seed  = options.config.seed + static_cast<std::uint64_t>(trial);
        tr.tasks.resize(tasks.size());

        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::string worker_error;
        auto worker = [&] {
            std::unique_ptr<analyzer> backend;
            try {
                backend = make_analyzer();
            } catch (const std::exception & e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                worker_error = e.what();
            }
            for (std::size_t i = next++; i < tasks.size(); i = next++) {
                if (!backend) {
                    task_record failed{tasks[i].task_id, {}};
                    sample_record s;
                    s.status = session_status::infrastructure_error;
                    s.error  = "no analyzer: " + worker_error;
                    s.test_results.assign(tasks[i].private_tests.size(), false);
                    failed.samples.assign(static_cast<std::size_t>(options.samples), s);
                    tr.tasks[i] = std::move(failed);
                    continue;
                }
                tr.tasks[i] = run_task(tasks[i], provider, *backend, options, sample_seed(tr.seed, i, 0));
            }
        };

        const int workers = std::min<int>(options.parallelism, static_cast<int>(tasks.size()));
        if (workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) {
                pool.emplace_back(worker);
            }
            for (auto & t : pool) {
                t.join();
            }
        }

        std::sort(tr.tasks.begin(), tr.tasks.end(),
                  [](const task_record & a, const task_record & b) { return a.task_id < b.task_id; });
        std::vector<std::string> warnings;
        tr.scores = compute_metrics(tr.tasks, &warnings);
        if (trial == 0) {
            result.warnings = std::move(warnings);
        }
        result.trials.push_back(std::move(tr));
    }
    result.mean = mean_metrics(result.trials);
    return result;
}

//
// results documents
//

namespace {

json metrics_json(const metrics & m) {
    return json{{"pass_rate", m.pass_rate},
                {"avg_pass_ratio", m.avg_pass_ratio ? json(*m.avg_pass_ratio) : json(nullptr)},
                {"ccp", m.ccp}};
}

metrics metrics_from_json(const json & j) {
    metrics m;
    m.pass_rate = j.at("pass_rate").get<double>();
    m.ccp       = j.at("ccp").get<double>();
    if (!j.at("avg_pass_ratio").is_null()) {
        m.avg_pass_ratio = j.at("avg_pass_ratio").get<double>();
    }
    return m;
}

json config_json(const session_config & c) {
    return json{{"lambda", c.lambda},
                {"budget_multiplier", c.budget_multiplier},
                {"max_generation_length", c.max_generation_length},
                {"budget", c.budget()},
                {"policy", c.policy.to_string()},
                {"seed", c.seed},
                {"repeat_threshold", c.repeat_threshold},
                {"timeout_ms", c.timeout_ms},
                {"memory_limit_mb", c.memory_limit_mb},
                {"exponent_offset", c.exponent_offset},
                {"constraint", to_string(c.constraint)},
                {"rollback", to_string(c.rollback)},
                {"run_with_input", c.run_with_input}};
}

session_config config_from_json(const json & j) {
    session_config c;
    c.lambda                = j.at("lambda").get<double>();
    c.budget_multiplier     = j.at("budget_multiplier").get<int>();
    c.max_generation_length = j.at("max_generation_length").get<int>();
    c.policy                = sampling_policy::parse(j.at("policy").get<std::string>());
    c.seed                  = j.at("seed").get<std::uint64_t>();
    c.repeat_threshold      = j.at("repeat_threshold").get<int>();
    c.timeout_ms            = j.at("timeout_ms").get<int>();
    c.memory_limit_mb       = j.at("memory_limit_mb").get<int>();
    c.exponent_offset       = j.value("exponent_offset", 0);
    c.constraint            = parse_constraint_mode(j.value("constraint", std::string("decay")));
    c.rollback              = parse_rollback_variant(j.value("rollback", std::string("strategic")));
    c.run_with_input        = j.value("run_with_input", true);
    return c;
}

} // namespace

json to_json(const benchmark_result & result) {
    json trials = json::array();
    for (const auto & t : result.trials) {
        json tasks = json::array();
        for (const auto & task : t.tasks) {
            json samples = json::array();
            for (const auto & s : task.samples) {
                json js{{"final_code", s.final_code},
                        {"compilable", s.compilable},
                        {"test_results", s.test_results},
                        {"tests_passed", s.tests_passed()},
                        {"tests_total", s.tests_total()},
                        {"tokens_consumed", s.tokens_consumed},
                        {"rollback_count", s.rollback_count},
                        {"candidates", s.candidates},
                        {"status", to_string(s.status)}};
                if (!s.error.empty()) {
                    js["error"] = s.error;
                }
                samples.push_back(std::move(js));
            }
            tasks.push_back(json{{"task_id", task.task_id}, {"samples", std::move(samples)}});
        }
        trials.push_back(json{{"trial", t.trial}, {"seed", t.seed}, {"metrics", metrics_json(t.scores)},
                              {"tasks", std::move(tasks)}});
    }
    return json{{"mode", to_string(result.options.mode)},
                {"samples", result.options.samples},
                {"trials_requested", result.options.trials},
                {"parallelism", result.options.parallelism},
                {"provider_support", result.provider_support},
                {"config", config_json(result.options.config)},
                {"metrics", metrics_json(result.mean)},
                {"warnings", result.warnings},
                {"trials", std::move(trials)}};
}

benchmark_result benchmark_from_json(const json & j) {
    benchmark_result r;
    r.options.mode        = parse_run_mode(j.at("mode").get<std::string>());
    r.options.samples     = j.at("samples").get<int>();
    r.options.trials      = j.at("trials_requested").get<int>();
    r.options.parallelism = j.value("parallelism", 1);
    r.provider_support    = j.value("provider_support", std::size_t{0});
    r.options.config      = config_from_json(j.at("config"));
    r.mean                = metrics_from_json(j.at("metrics"));
    r.warnings            = j.value("warnings", std::vector<std::string>{});
    for (const auto & jt : j.at("trials")) {
        trial_result t;
        t.trial  = jt.at("trial").get<int>();
        t.seed   = jt.at("seed").get<std::uint64_t>();
        t.scores = metrics_from_json(jt.at("metrics"));
        for (const auto & jtask : jt.at("tasks")) {
            task_record task{jtask.at("task_id").get<std::string>(), {}};
            for (const auto & js : jtask.at("samples")) {
                sample_record s;
                s.final_code      = js.at("final_code").get<std::string>();
                s.compilable      = js.at("compilable").get<bool>();
                s.test_results    = js.at("test_results").get<std::vector<bool>>();
                s.tokens_consumed = js.at("tokens_consumed").get<std::size_t>();
                s.rollback_count  = js.at("rollback_count").get<std::size_t>();
                s.candidates      = js.value("candidates", std::size_t{1});
                const auto status = parse_session_status(js.at("status").get<std::string>());
                if (!status) {
                    throw std::invalid_argument("results: unknown status " + js.at("status").dump());
                }
                s.status = *status;
                s.error  = js.value("error", std::string());
                task.samples.push_back(std::move(s));
            }
            t.tasks.push_back(std::move(task));
        }
        r.trials.push_back(std::move(t));
    }
    return r;
}

metrics recompute(const benchmark_result & result) {
    std::vector<trial_result> trials = result.trials;
    for (auto & t : trials) {
        t.scores = compute_metrics(t.tasks);
    }
    return mean_metrics(trials);
}

std::string summary(const benchmark_result & result) {
    std::ostringstream out;
    const auto & c = result.options.config;
    out << "mode " << to_string(result.options.mode) << ", policy " << c.policy.to_string() << ", " << result.trials.size()
        << " trial(s), " << (result.trials.empty() ? 0 : result.trials.front().tasks.size()) << " task(s), "
        << result.options.samples << " sample(s) per task\n";

    auto fmt = [](const metrics & m) {
        char apr[32] = "n/a";
        if (m.avg_pass_ratio) {
            std::snprintf(apr, sizeof apr, "%.4f", *m.avg_pass_ratio);
        }
        char line[160];
        std::snprintf(line, sizeof line, "pass_rate %.4f  avg_pass_ratio %s  ccp %.4f", m.pass_rate, apr, m.ccp);
        return std::string(line);
    };
    for (const auto & t : result.trials) {
        std::size_t tokens = 0;
        std::size_t rollbacks = 0;
        for (const auto & task : t.tasks) {
            for (const auto & s : task.samples) {
                tokens += s.tokens_consumed;
                rollbacks += s.rollback_count;
            }
        }
        out << "trial " << t.trial << " (seed " << t.seed << "): " << fmt(t.scores) << "  tokens " << tokens
            << "  rollbacks " << rollbacks << "\n";
    }
    out << "mean: " << fmt(result.mean) << "\n";

    for (const auto & t : result.trials) {
        for (const auto & task : t.tasks) {
            for (const auto & s : task.samples) {
                if (s.status == session_status::infrastructure_error) {
                    out << "infrastructure error in trial " << t.trial << ", task " << task.task_id << ": " << s.error
                        << "\n";
                }
            }
        }
    }
    for (const auto & w : result.warnings) {
        out << "warning: " << w << "\n";
    }
    return out.str();
}

} // namespace rollgen
