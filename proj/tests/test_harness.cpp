#include "rollgen/harness.hpp"
#include "rollgen/stub_sandbox.hpp"

#include <set>

#include "doctest.h"

using namespace rollgen;
using json = nlohmann::json;

#ifndef ROLLGEN_FIXTURES_DIR
#define ROLLGEN_FIXTURES_DIR "tests/fixtures"
#endif

namespace {

sample_record sample(std::vector<bool> results, bool compilable = true) {
    sample_record s;
    s.test_results = std::move(results);
    s.compilable   = compilable;
    return s;
}

task_record task(std::string id, std::vector<sample_record> samples) {
    return task_record{std::move(id), std::move(samples)};
}

struct suite {
    std::vector<task_spec> tasks = load_tasks(ROLLGEN_FIXTURES_DIR "/suite/tasks.jsonl");
    scripted_provider provider   = scripted_provider::load(ROLLGEN_FIXTURES_DIR "/suite/provider.json");
    std::shared_ptr<stub_sandbox> stub =
        std::make_shared<stub_sandbox>(stub_sandbox::load(ROLLGEN_FIXTURES_DIR "/suite/faults.json"));

    analyzer_factory factory() const {
        return [s = stub] { return std::make_unique<wire_analyzer>(make_stub_analyzer(*s)); };
    }
    benchmark_options options(run_mode mode) const {
        benchmark_options o;
        o.mode                         = mode;
        o.config.max_generation_length = 64;
        return o;
    }
};

} // namespace

TEST_SUITE("harness") {

TEST_CASE("pass rate") {
    const std::vector<task_record> one_of_four = {
        task("a", {sample({true}), sample({false}), sample({false}), sample({false})})};
    CHECK(pass_rate(one_of_four) == doctest::Approx(0.25));

    const std::vector<task_record> mixed = {task("a", {sample({true, true})}), task("b", {sample({true, false})})};
    CHECK(pass_rate(mixed) == doctest::Approx(0.5));

    std::vector<task_record> many = {task("a", {})};
    for (int i = 0; i < 100; ++i) {
        many[0].samples.push_back(sample({i != 0}));
    }
    CHECK(pass_rate(many) == doctest::Approx(0.99));

    // zero private tests: every sample passes vacuously
    const std::vector<task_record> empty_tests = {task("a", {sample({})})};
    CHECK(pass_rate(empty_tests) == 1.0);
}

TEST_CASE("average pass ratio") {
    const std::vector<task_record> tasks = {task("a", {sample({true, false, true, true})}),
                                            task("b", {sample({true, false}), sample({true, true})}),
                                            task("c", {sample({})})};
    std::vector<std::string> warnings;
    const auto ratio = avg_pass_ratio(tasks, &warnings);
    REQUIRE(ratio.has_value());
    CHECK(*ratio == doctest::Approx(0.75));
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("c") != std::string::npos);

    const std::vector<task_record> untested = {task("a", {sample({})})};
    CHECK_FALSE(avg_pass_ratio(untested).has_value());
}

TEST_CASE("compilable proportion") {
    const std::vector<task_record> tasks = {task("a", {sample({}, true), sample({}, false)}),
                                            task("b", {sample({}, true), sample({}, true)})};
    CHECK(ccp(tasks) == doctest::Approx(0.75));
    const std::vector<task_record> none = {task("a", {})};
    CHECK_THROWS_AS(ccp(none), std::invalid_argument);
    CHECK_THROWS(pass_rate(none));
}

TEST_CASE("task parsing and redaction") {
    const auto tasks = parse_tasks(R"({"task_id":"x","prompt":"p","entry_point":"f",)"
                                   R"("public_tests":[{"input":"1"}],)"
                                   R"("private_tests":[{"input":"2","expected_output":"4"}]})"
                                   "\n\n");
    REQUIRE(tasks.size() == 1);
    const auto view = tasks[0].redacted();
    CHECK(view.task_id == "x");
    CHECK(view.public_tests.size() == 1);
    CHECK(*view.entry_point == "f");
    CHECK(task_spec::from_json(tasks[0].to_json()).private_tests[0].expected_output == "4");

    try {
        parse_tasks("{\"task_id\":\"a\",\"prompt\":\"p\"}\n{broken\n");
        FAIL("expected a parse error");
    } catch (const std::exception & e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS(parse_tasks(R"({"task_id":"a","prompt":"p","private_tests":[{"input":"1"}]})"));
}

TEST_CASE("scripted suite in every mode") {
    suite s;
    const auto rocode = run_benchmark(s.tasks, s.provider, s.factory(), s.options(run_mode::rocode));
    CHECK(rocode.mean.pass_rate == 1.0);
    CHECK(rocode.mean.ccp == 1.0);
    CHECK_FALSE(rocode.infrastructure_failure());

    auto plain_options          = s.options(run_mode::plain);
    plain_options.config.policy = sampling_policy::greedy();
    const auto plain            = run_benchmark(s.tasks, s.provider, s.factory(), plain_options);
    CHECK(plain.mean.pass_rate < 1.0);
    CHECK(plain.mean.ccp < 1.0);

    auto filter_options          = s.options(run_mode::filtering);
    filter_options.config.policy = sampling_policy::with_temperature(1.0);
    const auto filtered          = run_benchmark(s.tasks, s.provider, s.factory(), filter_options);
    for (const auto & t : filtered.trials[0].tasks) {
        for (const auto & smp : t.samples) {
            CHECK(smp.tokens_consumed <= filter_options.config.budget());
            CHECK(smp.candidates >= 1);
        }
    }
    CHECK(filtered.mean.pass_rate >= plain.mean.pass_rate);
}

TEST_CASE("results round trip and recompute") {
    suite s;
    auto options    = s.options(run_mode::rocode);
    options.trials  = 2;
    options.samples = 2;
    options.config.policy = sampling_policy::with_temperature(0.7);
    const auto r    = run_benchmark(s.tasks, s.provider, s.factory(), options);
    REQUIRE(r.trials.size() == 2);
    CHECK(r.trials[1].seed == r.trials[0].seed + 1);

    const auto back = benchmark_from_json(json::parse(to_json(r).dump()));
    const auto m    = recompute(back);
    CHECK(m.pass_rate == doctest::Approx(r.mean.pass_rate).epsilon(1e-12));
    CHECK(m.ccp == doctest::Approx(r.mean.ccp).epsilon(1e-12));
    CHECK(to_json(back) == to_json(r));
    CHECK(summary(r).find("pass_rate") != std::string::npos);
}

TEST_CASE("parallel runs match serial runs") {
    suite s;
    auto options          = s.options(run_mode::rocode);
    options.samples       = 2;
    options.config.policy = sampling_policy::with_temperature(1.0);
    const auto serial     = run_benchmark(s.tasks, s.provider, s.factory(), options);
    options.parallelism   = 4;
    const auto parallel   = run_benchmark(s.tasks, s.provider, s.factory(), options);
    auto a                = to_json(serial);
    auto b                = to_json(parallel);
    a.erase("parallelism");
    b.erase("parallelism");
    CHECK(a == b);
}

TEST_CASE("sample seeds are distinct") {
    std::set<std::uint64_t> seen;
    for (std::size_t task = 0; task < 50; ++task) {
        for (int smp = 0; smp < 20; ++smp) {
            seen.insert(sample_seed(7, task, smp));
        }
    }
    CHECK(seen.size() == 1000);
}

}
