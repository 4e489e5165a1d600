#include "rollgen/rollback.hpp"

#include "doctest.h"

using namespace rollgen;

namespace {

// line 1 "a = 1", line 2 "b = f(a)", line 3 "print(b)"
generation_tree sample_tree() {
    generation_tree t;
    const char * texts[] = {"a", " = 1\n", "b", " = f(a)\n", "print", "(b)\n"};
    token_id id = 0;
    for (const char * text : texts) {
        t.append_token(id++, text, 0.0);
    }
    return t;
}

} // namespace

TEST_SUITE("rollback") {

TEST_CASE("fresh failure rolls back to the error position") {
    const auto t = sample_tree();
    const std::vector<error_report> reports = {error_report::ok(), error_report::failure(error_type::syntax, 3, 5)};
    const std::vector<double> trace = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    CHECK(choose_rollback(reports, trace, t) == rollback_point{3, 5});
}

TEST_CASE("failure without a line uses the most uncertain statement") {
    const auto t = sample_tree();
    const std::vector<error_report> reports = {error_report::failure(error_type::timeout)};
    const std::vector<double> trace = {0.1, 0.2, 0.9, 0.4, 0.5, 0.6};
    CHECK(choose_rollback(reports, trace, t) == rollback_point{2, 0});
}

TEST_CASE("an identical failure twice takes the entropy branch") {
    const auto t = sample_tree();
    const auto e = error_report::failure(error_type::syntax, 3, 5);
    const std::vector<error_report> reports = {e, e};
    const std::vector<double> trace = {0.1, 0.2, 0.9, 0.4, 0.5, 0.6};
    CHECK(choose_rollback(reports, trace, t) == rollback_point{2, 0});
    CHECK(choose_rollback(std::vector<error_report>{e}, trace, t) == rollback_point{3, 5});
}

TEST_CASE("recurrence never repeats the same rollback point") {
    const auto t = sample_tree();
    const auto e = error_report::failure(error_type::division_by_zero, 2);
    const std::vector<double> trace = {0.1, 0.2, 0.9, 0.4, 0.5, 0.6};
    const auto first  = choose_rollback(std::vector<error_report>{e}, trace, t);
    const auto second = choose_rollback(std::vector<error_report>{e, e}, trace, t);
    CHECK(first == rollback_point{2, 0});
    CHECK(second == rollback_point{1, 0});
}

TEST_CASE("argmax ties go to the earliest token") {
    CHECK(max_entropy_index(std::vector<double>{0.3, 0.7, 0.7, 0.1}) == 1);
    CHECK_THROWS_AS(max_entropy_index(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("variants") {
    const auto t = sample_tree();
    const std::vector<error_report> reports = {error_report::failure(error_type::syntax, 3, 5)};
    const std::vector<double> trace = {0.1, 0.2, 0.9, 0.4, 0.5, 0.6};
    CHECK(choose_rollback(reports, trace, t, rollback_variant::full_restart) == rollback_point{1, 0});
    CHECK(choose_rollback(reports, trace, t, rollback_variant::error_statement) == rollback_point{3, 0});
    CHECK(choose_rollback(reports, trace, t, rollback_variant::entropy_statement) == rollback_point{2, 0});
    CHECK(parse_rollback_variant("error_statement") == rollback_variant::error_statement);
    CHECK_THROWS_AS(parse_rollback_variant("nope"), std::invalid_argument);
}

TEST_CASE("preconditions") {
    const auto t = sample_tree();
    const std::vector<double> trace(6, 0.0);
    CHECK_THROWS_AS(choose_rollback(std::vector<error_report>{error_report::ok()}, trace, t), std::logic_error);
    CHECK_THROWS_AS(choose_rollback(std::vector<error_report>{}, trace, t), std::logic_error);
    CHECK_THROWS_AS(choose_rollback(std::vector<error_report>{error_report::failure(error_type::other)},
                                    std::vector<double>(3, 0.0), t),
                    std::invalid_argument);
    generation_tree empty;
    CHECK_THROWS_AS(choose_rollback(std::vector<error_report>{error_report::failure(error_type::other)},
                                    std::vector<double>{}, empty),
                    infrastructure_error);
}

TEST_CASE("report equality is field equality") {
    const auto a = error_report::failure(error_type::syntax, 2, 4, "one message");
    const auto b = error_report::failure(error_type::syntax, 2, 4, "another message");
    CHECK(same_error(a, b));
    CHECK_FALSE(same_error(a, error_report::failure(error_type::syntax, 2)));
    CHECK_FALSE(same_error(a, error_report::failure(error_type::scope, 2, 4)));
}

}
