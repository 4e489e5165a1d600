#include "rollgen/trie.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"

using namespace rollgen;

#ifndef ROLLGEN_FIXTURES_DIR
#define ROLLGEN_FIXTURES_DIR "tests/fixtures"
#endif

namespace {

generation_tree tree_of(std::initializer_list<const char *> texts) {
    generation_tree t;
    token_id id = 0;
    for (const char * text : texts) {
        t.append_token(id++, text, 0.0);
    }
    return t;
}

} // namespace

TEST_SUITE("trie") {

TEST_CASE("first token") {
    generation_tree t;
    const node_id n = t.append_token(7, "def", 0.5);
    CHECK(t.node(n).step == 0);
    CHECK(t.active_text() == "def");
    CHECK(t.total_tokens_emitted() == 1);
    CHECK(t.node(n).penalty == 1.0);
}

TEST_CASE("re-appending after a rollback reuses the node and keeps its penalty") {
    generation_tree t;
    t.append_token(1, "a", 0.0);
    const node_id b = t.append_token(2, "b", 0.0);
    const node_id r = t.rollback_to({1, 1});
    t.apply_penalties(r, 0.9);
    const double before = t.node(b).penalty;
    CHECK(t.append_token(2, "b", 0.3) == b);
    CHECK(t.node(b).penalty == before);
    CHECK(t.node(b).error_flag);
    CHECK(t.node(b).entropy == doctest::Approx(0.3));
}

TEST_CASE("bookkeeping: three appends, roll back one, two appends") {
    auto t = tree_of({"a", "b", "c"});
    t.rollback_to({1, 2});
    t.append_token(10, "x", 0.0);
    t.append_token(11, "y", 0.0);
    CHECK(t.total_tokens_emitted() == 5);
    CHECK(t.active_length() == 4);
    CHECK(t.active_text() == "abxy");
}

TEST_CASE("statement boundaries") {
    generation_tree t;
    for (int i = 0; i < 7; ++i) {
        t.append_token(i, i == 6 ? "\n" : "x", 0.0);
    }
    t.mark_statement();
    REQUIRE(t.stmt_boundaries().size() == 1);
    CHECK(t.node(t.stmt_boundaries()[0]).step == 6);
    CHECK_THROWS_AS(t.mark_statement(), std::logic_error);

    t.append_token(100, "y\n", 0.0);
    t.mark_statement();
    REQUIRE(t.stmt_boundaries().size() == 2);
    CHECK(t.node(t.stmt_boundaries()[1]).step > t.node(t.stmt_boundaries()[0]).step);

    t.rollback_to({2, 0});
    CHECK(t.stmt_boundaries().size() == 1);
    t.rollback_to({1, 0});
    CHECK(t.stmt_boundaries().empty());

    generation_tree empty;
    CHECK_THROWS_AS(empty.mark_statement(), std::logic_error);
}

TEST_CASE("rollback to the start resolves to the root") {
    auto t = tree_of({"x", " = 1\n", "y"});
    CHECK(t.rollback_to({1, 0}) == t.root());
    CHECK(t.active_length() == 0);
    CHECK(t.active_text().empty());
    for (std::uint32_t i = 1; i < t.node_count(); ++i) {
        CHECK(t.node(node_id{i}).error_flag);
    }
}

TEST_CASE("rollback lands on the token boundary at or before the point") {
    auto t = tree_of({"a", " =", " 1\n", "b", " =", " x", "\n"});
    // line 2 is "b = x"; column 4 is inside " x"
    const node_id r = t.rollback_to({2, 4});
    CHECK(r == t.active_path()[4]);
    CHECK(t.active_text() == "a = 1\nb =");
    REQUIRE(t.last_abandoned().size() == 2);
    CHECK(t.node(t.last_abandoned()[0]).text == " x");
    CHECK(t.node(t.last_abandoned()[0]).error_flag);
}

TEST_CASE("rolling back twice to the same point flags nothing new") {
    auto t = tree_of({"a", "b", "c"});
    t.rollback_to({1, 1});
    const auto count = t.rollback_count();
    t.rollback_to({1, 1});
    CHECK(t.last_abandoned().empty());
    CHECK(t.rollback_count() == count);
}

TEST_CASE("an empty token at the rollback position is regenerated") {
    auto t = tree_of({"x\n", ""});
    CHECK(t.locate(2, 0) == t.active_path()[0]);
    auto u = tree_of({"x\n", "", "y"});
    CHECK(u.locate(2, 1) == u.active_path()[2]);
}

TEST_CASE("locate clamps columns and rejects lines past the text") {
    auto t = tree_of({"ab\n", "cd"});
    CHECK(t.locate(1, 99) == t.root());  // clamps before the newline, inside "ab\n"
    CHECK(t.locate(2, 2) == t.current());
    CHECK_THROWS_AS((void)t.locate(3, 0), std::out_of_range);
    CHECK_THROWS_AS((void)t.locate(0, 0), std::out_of_range);
}

TEST_CASE("columns count code points") {
    auto t = tree_of({"s = '\xC3\xA9", "'\n"});
    CHECK(t.position_of(t.token_end(0)) == rollback_point{1, 6});
    CHECK(t.locate(1, 6) == t.active_path()[0]);
    CHECK(t.locate(1, 5) == t.root());
    CHECK(t.byte_offset_of(1, 5) == 5);
    CHECK(t.byte_offset_of(1, 6) == 7);
}

TEST_CASE("penalties decay with distance from the rollback point") {
    auto t = tree_of({"r", "a", "b", "c", "d"});
    const node_id r_node = t.rollback_to({1, 1});
    t.apply_penalties(r_node, 0.9);
    const auto & p = t.last_abandoned();
    REQUIRE(p.size() == 4);
    CHECK(t.node(p[0]).penalty == 1.0);
    CHECK(t.node(p[3]).penalty == doctest::Approx(0.729).epsilon(1e-12));

    // the same path abandoned again accumulates multiplicatively
    for (token_id id = 1; id <= 4; ++id) {
        t.append_token(id, std::string(1, static_cast<char>('a' + id - 1)), 0.0);
    }
    t.apply_penalties(t.rollback_to({1, 1}), 0.9);
    CHECK(t.node(p[3]).penalty == doctest::Approx(0.5314409999999999).epsilon(1e-12));
}

TEST_CASE("exponent offset shifts the decay by one step") {
    auto t = tree_of({"r", "a", "b"});
    t.apply_penalties(t.rollback_to({1, 1}), 0.5, 1);
    CHECK(t.node(t.last_abandoned()[0]).penalty == doctest::Approx(0.5));
    CHECK(t.node(t.last_abandoned()[1]).penalty == doctest::Approx(0.25));
}

TEST_CASE("penalty floor and blocking") {
    auto t = tree_of({"r", "a"});
    for (int i = 0; i < 400; ++i) {
        const node_id r = t.rollback_to({1, 1});
        if (!t.last_abandoned().empty()) {
            t.apply_penalties(r, 0.01, 1);
        }
        t.append_token(1, "a", 0.0);
    }
    CHECK(t.node(t.current()).penalty == k_penalty_floor);

    auto u = tree_of({"r", "a", "b"});
    u.block_abandoned(u.rollback_to({1, 1}));
    CHECK(u.node(u.last_abandoned()[0]).penalty == k_penalty_floor);
    CHECK(u.node(u.last_abandoned()[1]).penalty == k_penalty_floor);
}

TEST_CASE("apply_penalties validates its inputs") {
    auto t = tree_of({"r", "a"});
    const node_id r = t.rollback_to({1, 1});
    CHECK_THROWS_AS(t.apply_penalties(r, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(t.apply_penalties(r, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(t.apply_penalties(t.root(), 0.9), std::logic_error);
}

TEST_CASE("child penalty vector") {
    generation_tree t;
    CHECK(t.child_penalty_vector(t.root()).empty());

    auto u = tree_of({"r", "a", "b", "c"});
    const node_id r = u.rollback_to({1, 1});
    u.apply_penalties(r, 0.9);
    u.append_token(9, "z", 0.0);
    const auto v = u.child_penalty_vector(r);
    CHECK(v.size() == 2);
    CHECK(v.at(1) == 1.0);  // first regenerated position
    CHECK(v.at(9) == 1.0);  // never on an error path

    // the grandchild carries 0.9^1 and the great-grandchild 0.9^2
    const node_id a = u.node(r).children.front();
    const node_id b = u.node(a).children.front();
    CHECK(u.child_penalty_vector(a).at(2) == doctest::Approx(0.9));
    CHECK(u.child_penalty_vector(b).at(3) == doctest::Approx(0.81));
}

TEST_CASE("decoded text and line numbers") {
    auto t = tree_of({"a", " =", " 1"});
    CHECK(t.decoded_text(t.current()) == "a = 1");
    CHECK(t.token_index_to_lineno(2) == 1);
    CHECK(t.final_code() == "a = 1");

    auto u = tree_of({"x=1\n", "y", "=2"});
    CHECK(u.token_index_to_lineno(1) == 2);
    CHECK(u.decoded_text(u.active_path()[0]) == "x=1\n");

    const auto end = u.position_of(u.active_text().size());
    CHECK(u.locate(end) == u.current());
    CHECK_THROWS_AS((void)u.token_index_to_lineno(3), std::out_of_range);
}

TEST_CASE("text round trip on every token") {
    auto t = tree_of({"def f(x):\n", "    ", "return", " x", " +", " 1\n", "\n", "y = f(2)\n"});
    for (std::size_t i = 0; i < t.active_length(); ++i) {
        const rollback_point end = t.position_of(t.token_end(i));
        CHECK(t.locate(end) == t.active_path()[i]);
    }
}

TEST_CASE("dump matches the golden file") {
    generation_tree t;
    t.append_token(0, "def f(x):\n", 0.0);
    t.mark_statement();
    t.append_token(1, "    return", 0.2);
    t.append_token(2, " x\"\n", 0.7);
    t.apply_penalties(t.rollback_to({2, 0}), 0.9);
    t.append_token(1, "    return", 0.2);
    t.append_token(3, " x + 1\n", 0.7);
    t.mark_statement();

    std::ifstream in(ROLLGEN_FIXTURES_DIR "/../golden/trie_dump.txt");
    REQUIRE(in);
    std::stringstream want;
    want << in.rdbuf();
    CHECK(t.dump() == want.str());
}

}
