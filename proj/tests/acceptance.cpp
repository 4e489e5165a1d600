// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "rollgen/decoding.hpp"
#include "rollgen/harness.hpp"
#include "rollgen/orchestrator.hpp"
#include "rollgen/rollback.hpp"
#include "rollgen/stub_sandbox.hpp"
#include "rollgen/trie.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace rollgen;
using json = nlohmann::json;

#ifndef ROLLGEN_FIXTURES_DIR
#define ROLLGEN_FIXTURES_DIR "tests/fixtures"
#endif

namespace {

struct outcome {
    bool ok = true;
    std::string detail;
};

int failures = 0;

void criterion(const char * name, double limit_s, const std::function<outcome()> & body) {
    const auto t0 = std::chrono::steady_clock::now();
    outcome o;
    try {
        o = body();
    } catch (const std::exception & e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= limit_s) {
        o.ok = false;
        o.detail += " [over the " + std::to_string(static_cast<int>(limit_s)) + " s limit]";
    }
    std::printf("%s  %-34s %6.2f s  %s\n", o.ok ? "PASS" : "FAIL", name, secs, o.detail.c_str());
    std::fflush(stdout);
    failures += o.ok ? 0 : 1;
}

std::string fmt(const char * f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

token_distribution random_dist(std::mt19937_64 & rng, std::size_t n, bool sparse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(n);
    double sum = 0.0;
    for (auto & x : w) {
        x = (sparse && u(rng) < 0.3) ? 0.0 : u(rng);
        sum += x;
    }
    if (sum == 0.0) {
        w[0] = 1.0;
        sum  = 1.0;
    }
    for (auto & x : w) {
        x /= sum;
    }
    return token_distribution::from_dense(w);
}

//
// constrained-distribution arithmetic
//
outcome check_constrain() {
    const auto d = token_distribution::from_dense(std::vector<double>{0.5, 0.3, 0.2});
    const auto c = constrain(d, {{0, 0.729}});
    const double want[] = {0.421631, 0.347022, 0.231347};
    double example_err  = 0.0;
    for (token_id i = 0; i < 3; ++i) {
        example_err = std::max(example_err, std::abs(c.prob(i) - want[i]));
    }

    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double oracle_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 40;
        const auto dist     = random_dist(rng, n, trial % 2 == 1);
        penalty_map pen;
        for (std::size_t v = 0; v < n; ++v) {
            if (u(rng) < 0.5) {
                pen[static_cast<token_id>(v)] = std::max(k_penalty_floor, u(rng));
            }
        }
        // brute force over the dense vector
        const auto p = dist.dense();
        std::vector<double> q(n);
        double z = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            auto it = pen.find(static_cast<token_id>(v));
            q[v]    = p[v] * (it == pen.end() ? 1.0 : it->second);
            z += q[v];
        }
        const auto got = constrain(dist, pen);
        for (std::size_t v = 0; v < n; ++v) {
            oracle_err = std::max(oracle_err, std::abs(got.prob(static_cast<token_id>(v)) - q[v] / z));
        }
    }
    return {example_err <= 1e-6 && oracle_err <= 1e-9,
            "example err " + fmt("%.2e", example_err) + ", 1000 random pairs max err " + fmt("%.2e", oracle_err)};
}

//
// rollback-point selection
//
outcome check_rollback_table() {
    // line 1: "def f(x):"  line 2: "    y = x + 1"  line 3: "    return y"
    generation_tree tree;
    const std::pair<const char *, double> tokens[] = {
        {"def f(x):\n", 0.1}, {"    y", 0.2}, {" = x + 1\n", 0.9}, {"    return", 0.3}, {" y\n", 0.5},
    };
    token_id id = 0;
    for (const auto & [text, h] : tokens) {
        tree.append_token(id++, text, h);
    }
    const std::vector<double> base = tree.entropy_trace();
    const std::vector<double> tie  = {0.1, 0.7, 0.2, 0.7, 0.3};
    const std::vector<double> first = {0.9, 0.2, 0.3, 0.1, 0.5};

    using E = error_type;
    const auto syn = [](int l, std::optional<int> o) { return error_report::failure(E::syntax, l, o); };
    struct row {
        const char * what;
        std::vector<error_report> reports;
        const std::vector<double> * trace;
        rollback_point want;
    };
    const std::vector<row> table = {
        {"error point with column", {syn(2, 9)}, &base, {2, 9}},
        {"error point without column", {error_report::failure(E::division_by_zero, 3)}, &base, {3, 0}},
        {"no line: entropy", {error_report::failure(E::assertion_failed)}, &base, {2, 0}},
        {"recurrence: entropy", {syn(2, 9), syn(2, 9)}, &base, {2, 0}},
        {"different column is new", {syn(2, 9), syn(2, 10)}, &base, {2, 10}},
        {"different type is new", {syn(3, 4), error_report::failure(E::index_out_of_bounds, 3, 4)}, &base, {3, 4}},
        {"success resets recurrence", {syn(3, 4), error_report::ok(), syn(3, 4)}, &base, {3, 4}},
        {"recurrence at entropy line", {error_report::failure(E::division_by_zero, 2),
                                        error_report::failure(E::division_by_zero, 2)}, &base, {1, 0}},
        {"line past the text: entropy", {error_report::failure(E::repetition, 7)}, &base, {2, 0}},
        {"recurrence without line", {error_report::failure(E::assertion_failed),
                                     error_report::failure(E::assertion_failed)}, &base, {2, 0}},
        {"entropy tie: earliest", {error_report::failure(E::timeout)}, &tie, {2, 0}},
        {"entropy on line 1", {error_report::failure(E::assertion_failed)}, &first, {1, 0}},
    };

    int good = 0;
    std::string wrong;
    for (const auto & r : table) {
        const rollback_point got = choose_rollback(r.reports, *r.trace, tree);
        if (got == r.want) {
            ++good;
        } else {
            wrong += std::string(" [") + r.what + ": got (" + std::to_string(got.lineno) + "," +
                     std::to_string(got.offset) + ")]";
        }
    }
    return {good == static_cast<int>(table.size()),
            std::to_string(good) + "/" + std::to_string(table.size()) + " cases" + wrong};
}

//
// scripted end-to-end suite and ablation
//
struct suite {
    std::vector<task_spec> tasks;
    std::unique_ptr<scripted_provider> provider;
    std::shared_ptr<stub_sandbox> stub;
    json expected;

    explicit suite(const std::string & dir) {
        tasks    = load_tasks(dir + "/tasks.jsonl");
        provider = std::make_unique<scripted_provider>(scripted_provider::load(dir + "/provider.json"));
        stub     = std::make_shared<stub_sandbox>(stub_sandbox::load(dir + "/faults.json"));
        std::ifstream in(dir + "/expected.json");
        expected = json::parse(in);
    }

    analyzer_factory factory() const {
        return [s = stub] { return std::make_unique<wire_analyzer>(make_stub_analyzer(*s)); };
    }

    session_config config() const {
        session_config c;
        c.max_generation_length = expected.at("max_generation_length").get<int>();
        return c;
    }
};

outcome check_scripted_suite() {
    const suite s(ROLLGEN_FIXTURES_DIR "/suite");
    benchmark_options options;
    options.config = s.config();
    const benchmark_result r = run_benchmark(s.tasks, *s.provider, s.factory(), options);

    const auto & expected = s.expected.at("tasks");
    int matched           = 0;
    std::string wrong;
    std::size_t injected = 0;
    for (const auto & task : r.trials.front().tasks) {
        const auto & want     = expected.at(task.task_id);
        const sample_record & got = task.samples.front();
        injected += want.at("errors").size();
        const bool ok = got.rollback_count == want.at("rollbacks").get<std::size_t>() &&
                        got.status == session_status::eos && got.tokens_consumed <= options.config.budget() &&
                        got.final_code == want.at("final_code").get<std::string>();
        if (ok) {
            ++matched;
        } else {
            wrong += " [" + task.task_id + ": " + std::to_string(got.rollback_count) + " rollbacks, " +
                     std::string(to_string(got.status)) + "]";
        }
    }
    const metrics & m = r.trials.front().scores;
    const bool ok     = m.pass_rate == 1.0 && m.ccp == 1.0 && matched == static_cast<int>(expected.size()) &&
                   r.trials.front().tasks.size() == 20;
    return {ok, "PassRate " + fmt("%.3f", m.pass_rate) + ", CCP " + fmt("%.3f", m.ccp) + ", rollback counts " +
                    std::to_string(matched) + "/" + std::to_string(expected.size()) + " (" +
                    std::to_string(injected) + " injected errors)" + wrong};
}

outcome check_ablation() {
    const suite s(ROLLGEN_FIXTURES_DIR "/suite");
    const std::string id = s.expected.at("ablation_task").get<std::string>();
    const auto it = std::find_if(s.tasks.begin(), s.tasks.end(), [&](const task_spec & t) { return t.task_id == id; });
    if (it == s.tasks.end()) {
        return {false, "ablation task missing"};
    }
    wire_analyzer backend = make_stub_analyzer(*s.stub);

    session_config free = s.config();
    free.constraint     = constraint_mode::none;
    const auto without  = generate(it->redacted(), *s.provider, backend, free);

    const auto with = generate(it->redacted(), *s.provider, backend, s.config());

    const bool ok = without.status == session_status::budget_exhausted &&
                    without.tokens_consumed == free.budget() && with.status == session_status::eos;
    return {ok, "no penalties: " + std::string(to_string(without.status)) + " after " +
                    std::to_string(without.tokens_consumed) + " tokens / " + std::to_string(without.rollback_count) +
                    " rollbacks; decay: " + std::string(to_string(with.status)) + " after " +
                    std::to_string(with.tokens_consumed) + " tokens"};
}

//
// tree fuzzing
//
outcome check_trie_fuzz() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::string> texts = {"a", "bc", " ", "\n", "x = ", "1\n", "(", ")", "é", "", "  ", "def"};

    std::size_t ops = 0;
    std::string broken;
    auto fail = [&](int seq, const std::string & what) {
        if (broken.empty()) {
            broken = "sequence " + std::to_string(seq) + ": " + what;
        }
    };

    for (int seq = 0; seq < 1000 && broken.empty(); ++seq) {
        generation_tree tree;
        const bool fresh = seq % 2 == 0;  // fresh tokens never reuse a node
        std::size_t appends = 0;
        std::size_t rollbacks = 0;
        token_id next_fresh = 0;
        bool appended = false;
        std::map<token_id, std::string> text_of;
        const int length = 20 + static_cast<int>(rng() % 80);

        for (int op = 0; op < length && broken.empty(); ++op, ++ops) {
            std::vector<double> before(tree.node_count());
            for (std::size_t i = 0; i < before.size(); ++i) {
                before[i] = tree.node(node_id{static_cast<std::uint32_t>(i)}).penalty;
            }

            const double roll = u(rng);
            // fresh sequences roll back only right after an append, so every
            // rollback leaves exactly one new flagged leaf
            const bool may_roll_back = !fresh || appended;
            appended = false;
            if (roll < 0.6 || tree.active_length() == 0 || (roll >= 0.7 && !may_roll_back)) {
                token_id tok;
                if (fresh) {
                    tok = next_fresh++;
                    text_of[tok] = texts[rng() % texts.size()];
                } else {
                    tok = static_cast<token_id>(rng() % texts.size());
                    text_of[tok] = texts[static_cast<std::size_t>(tok)];
                }
                tree.append_token(tok, text_of[tok], u(rng));
                ++appends;
                appended = true;
            } else if (roll < 0.7) {
                const auto b = tree.stmt_boundaries();
                if (tree.current() != tree.root() && (b.empty() || b.back() != tree.current())) {
                    tree.mark_statement();
                }
            } else {
                const std::size_t byte = rng() % (tree.active_text().size() + 1);
                const rollback_point r = tree.position_of(byte);
                const node_id r_node   = tree.rollback_to(r);
                if (!tree.last_abandoned().empty()) {
                    ++rollbacks;
                }
                if (u(rng) < 0.8) {
                    tree.apply_penalties(r_node, 0.05 + 0.9 * u(rng), static_cast<int>(rng() % 2));
                } else {
                    tree.block_abandoned(r_node);
                }
            }

            // prefix uniqueness and parent links
            for (std::size_t i = 0; i < tree.node_count(); ++i) {
                const auto & n = tree.node(node_id{static_cast<std::uint32_t>(i)});
                std::set<token_id> seen;
                for (const node_id c : n.children) {
                    const auto & child = tree.node(c);
                    if (!seen.insert(child.token).second) {
                        fail(seq, "duplicate child token");
                    }
                    if (!child.parent || child.parent->value != i || child.step != n.step + 1) {
                        fail(seq, "broken parent link");
                    }
                }
            }
            // penalties never grow and stay in [floor, 1]
            for (std::size_t i = 0; i < tree.node_count(); ++i) {
                const double p = tree.node(node_id{static_cast<std::uint32_t>(i)}).penalty;
                if (p < k_penalty_floor || p > 1.0 || (i < before.size() && p > before[i])) {
                    fail(seq, "penalty not monotone");
                }
            }
            // text round trip
            std::string joined;
            for (const node_id n : tree.active_path()) {
                joined += tree.node(n).text;
            }
            if (joined != tree.active_text() || tree.decoded_text(tree.current()) != joined ||
                tree.final_code() != joined) {
                fail(seq, "text round trip");
            }
            for (std::size_t t = 0; t < tree.active_length(); ++t) {
                if (tree.node(tree.active_path()[t]).text.empty()) {
                    continue;
                }
                const rollback_point end = tree.position_of(tree.token_end(t));
                if (tree.byte_offset_of(end.lineno, end.offset) != tree.token_end(t)) {
                    fail(seq, "position round trip");
                }
            }
            // audit completeness
            if (fresh) {
                std::size_t flagged_leaves = 0;
                for (std::size_t i = 0; i < tree.node_count(); ++i) {
                    const auto & n = tree.node(node_id{static_cast<std::uint32_t>(i)});
                    flagged_leaves += (n.children.empty() && n.error_flag) ? 1 : 0;
                }
                if (flagged_leaves != rollbacks) {
                    fail(seq, "flagged leaves differ from rollbacks");
                }
            }
            // budget accounting
            if (tree.total_tokens_emitted() != appends || tree.rollback_count() != rollbacks ||
                tree.node_count() - 1 > appends || (fresh && tree.node_count() - 1 != appends) ||
                tree.active_length() > appends) {
                fail(seq, "token accounting");
            }
        }
    }
    return {broken.empty(), broken.empty() ? "1000 sequences, " + std::to_string(ops) + " operations" : broken};
}

//
// metric oracles
//
double oracle_pass_rate(const std::vector<std::vector<std::vector<bool>>> & m) {
    double sum = 0.0;
    for (const auto & task : m) {
        // enumerate the size-1 subsets of samples and count those without a full pass
        std::size_t failing = 0;
        std::size_t subsets = 0;
        for (const auto & sample : task) {
            ++subsets;
            bool all = true;
            for (const bool b : sample) {
                all = all && b;
            }
            failing += all ? 0 : 1;
        }
        sum += 1.0 - static_cast<double>(failing) / static_cast<double>(subsets);
    }
    return sum / static_cast<double>(m.size());
}

double oracle_avg_pass_ratio(const std::vector<std::vector<std::vector<bool>>> & m) {
    double outer = 0.0;
    for (const auto & task : m) {
        double inner = 0.0;
        for (const auto & sample : task) {
            double hits = 0.0;
            for (const bool b : sample) {
                hits += b ? 1.0 : 0.0;
            }
            inner += hits / static_cast<double>(sample.size());
        }
        outer += inner / static_cast<double>(task.size());
    }
    return outer / static_cast<double>(m.size());
}

std::vector<task_record> records_of(const std::vector<std::vector<std::vector<bool>>> & m) {
    std::vector<task_record> out;
    for (std::size_t t = 0; t < m.size(); ++t) {
        task_record r{"t" + std::to_string(t), {}};
        for (const auto & sample : m[t]) {
            sample_record s;
            s.compilable   = true;
            s.test_results = sample;
            r.samples.push_back(std::move(s));
        }
        out.push_back(std::move(r));
    }
    return out;
}

outcome check_metrics() {
    std::size_t exhaustive = 0;
    std::size_t sampled    = 0;
    std::size_t shapes_exh = 0;
    std::size_t shapes_smp = 0;
    double worst           = 0.0;
    std::mt19937_64 rng(99);

    auto evaluate = [&](const std::vector<std::vector<std::vector<bool>>> & m) {
        const auto recs = records_of(m);
        worst           = std::max(worst, std::abs(pass_rate(recs) - oracle_pass_rate(m)));
        worst           = std::max(worst, std::abs(*avg_pass_ratio(recs) - oracle_avg_pass_ratio(m)));
    };

    for (int tasks = 1; tasks <= 3; ++tasks) {
        for (int n = 1; n <= 4; ++n) {
            for (int tests = 1; tests <= 3; ++tests) {
                const int cells = tasks * n * tests;
                auto fill       = [&](std::uint64_t bits) {
                    std::vector<std::vector<std::vector<bool>>> m(
                        tasks, std::vector<std::vector<bool>>(n, std::vector<bool>(tests)));
                    int k = 0;
                    for (auto & task : m) {
                        for (auto & sample : task) {
                            for (std::size_t j = 0; j < sample.size(); ++j, ++k) {
                                sample[j] = ((bits >> k) & 1U) != 0;
                            }
                        }
                    }
                    return m;
                };
                if (cells <= 16) {
                    ++shapes_exh;
                    for (std::uint64_t bits = 0; bits < (1ULL << cells); ++bits) {
                        evaluate(fill(bits));
                        ++exhaustive;
                    }
                } else {
                    ++shapes_smp;
                    for (int k = 0; k < 20000; ++k) {
                        evaluate(fill(rng()));
                        ++sampled;
                    }
                }
            }
        }
    }

    // pass/fail matrices (one bit per sample) with ragged sample counts, all of them
    std::size_t ragged = 0;
    for (int tasks = 1; tasks <= 3; ++tasks) {
        std::vector<int> ns(tasks, 1);
        while (true) {
            int total = 0;
            for (int n : ns) {
                total += n;
            }
            for (std::uint64_t bits = 0; bits < (1ULL << total); ++bits) {
                std::vector<std::vector<std::vector<bool>>> m;
                int k = 0;
                for (int n : ns) {
                    std::vector<std::vector<bool>> task;
                    for (int i = 0; i < n; ++i, ++k) {
                        task.push_back({((bits >> k) & 1U) != 0});
                    }
                    m.push_back(std::move(task));
                }
                evaluate(m);
                ++ragged;
            }
            int d = 0;
            while (d < tasks && ++ns[d] > 4) {
                ns[d++] = 1;
            }
            if (d == tasks) {
                break;
            }
        }
    }

    return {worst <= 1e-12, fmt("max err %.1e; ", worst) + std::to_string(exhaustive) + " matrices exhaustive over " +
                                std::to_string(shapes_exh) + " shapes (<= 16 cells), " + std::to_string(sampled) +
                                " sampled over the " + std::to_string(shapes_smp) + " larger shapes, " +
                                std::to_string(ragged) + " ragged pass/fail matrices"};
}

//
// decoding policies
//
outcome check_policies() {
    std::mt19937_64 rng(5);
    int topk_ok = 0;
    for (int i = 0; i < 100; ++i) {
        const auto d = random_dist(rng, 2 + rng() % 30, i % 2 == 0);
        token_sampler s(sampling_policy::with_top_k(1), rng());
        topk_ok += s.sample(d) == d.argmax() ? 1 : 0;
    }

    const auto five = token_distribution::from_dense(std::vector<double>{0.35, 0.25, 0.2, 0.15, 0.05});
    token_sampler nucleus(sampling_policy::with_nucleus(1.0), 12345);
    std::vector<double> counts(5, 0.0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        counts[static_cast<std::size_t>(nucleus.sample(five))] += 1.0;
    }
    double chi2 = 0.0;
    for (token_id v = 0; v < 5; ++v) {
        const double e = five.prob(v) * draws;
        chi2 += (counts[static_cast<std::size_t>(v)] - e) * (counts[static_cast<std::size_t>(v)] - e) / e;
    }
    const double p_value = std::exp(-chi2 / 2.0) * (1.0 + chi2 / 2.0);  // survival function, 4 degrees of freedom

    int argmax_ok = 0;
    int argmax_n  = 0;
    for (const double t : {0.5, 0.8, 1.5}) {
        for (int i = 0; i < 100; ++i) {
            const auto d = random_dist(rng, 2 + rng() % 30, i % 3 == 0);
            argmax_ok += policy_distribution(d, sampling_policy::with_temperature(t)).argmax() == d.argmax() ? 1 : 0;
            ++argmax_n;
        }
    }

    const bool ok = topk_ok == 100 && p_value > 0.01 && argmax_ok == argmax_n;
    return {ok, "top_k(1)=greedy " + std::to_string(topk_ok) + "/100; nucleus(1.0) chi2 " + fmt("%.2f", chi2) +
                    " p " + fmt("%.3f", p_value) + "; temperature argmax " + std::to_string(argmax_ok) + "/" +
                    std::to_string(argmax_n)};
}

} // namespace

int main() {
    criterion("constrained-distribution arithmetic", 1.0, check_constrain);
    criterion("rollback-point selection table", 1.0, check_rollback_table);
    criterion("scripted end-to-end suite", 30.0, check_scripted_suite);
    criterion("penalty ablation", 5.0, check_ablation);
    criterion("tree fuzzing", 10.0, check_trie_fuzz);
    criterion("metric oracles", 5.0, check_metrics);
    criterion("decoding policies", 10.0, check_policies);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
