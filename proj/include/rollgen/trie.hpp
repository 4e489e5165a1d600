#pragma once

#include "rollgen/report.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rollgen {

struct node_id {
    std::uint32_t value = 0;
    auto operator<=>(const node_id &) const = default;
};

// Position in the decoded text of the active path.
struct rollback_point {
    int lineno = 1;  // 1-based
    int offset = 0;  // 0-based column, in code points
    auto operator<=>(const rollback_point &) const = default;
};

struct token_node {
    token_id token = -1;
    std::string text;
    int step = -1;  // 0-based position on its path; root is -1
    double entropy = 0.0;
    double penalty = 1.0;
    bool error_flag = false;
    std::optional<node_id> parent;
    std::vector<node_id> children;  // insertion order, distinct tokens
};

using penalty_map = std::unordered_map<token_id, double>;

inline constexpr double k_penalty_floor = 1e-12;

//
// Prefix tree over every generation attempt of one session.
//
// The active path runs from the root to `current()`. Rolled-back nodes stay in
// the tree with `error_flag` set so that later attempts through the same
// prefix meet the accumulated penalties again.
//
class generation_tree {
public:
    generation_tree();

    node_id root() const { return node_id{0}; }
    node_id current() const { return current_; }
    const token_node & node(node_id id) const { return nodes_.at(id.value); }
    std::size_t node_count() const { return nodes_.size(); }

    // Nodes on the active path, root excluded; index i holds the node at step i.
    std::span<const node_id> active_path() const { return path_; }
    std::size_t active_length() const { return path_.size(); }

    std::size_t total_tokens_emitted() const { return total_emitted_; }
    std::size_t rollback_count() const { return rollbacks_; }

    node_id append_token(token_id token, std::string_view text, double entropy);

    // Records `current()` as the end of an accepted statement.
    void mark_statement();
    std::span<const node_id> stmt_boundaries() const { return boundaries_; }

    // Truncates the active path at the token boundary at or before `r`; the
    // abandoned suffix is flagged and remembered for `apply_penalties`.
    node_id rollback_to(rollback_point r);

    // Multiplies the penalty of every node abandoned by the last rollback by
    // lambda^(t - r + exponent_offset), r being the step right after `r_node`.
    void apply_penalties(node_id r_node, double lambda, int exponent_offset = 0);

    // Drives the penalties of the last abandoned suffix to the floor.
    void block_abandoned(node_id r_node);

    std::span<const node_id> last_abandoned() const { return abandoned_; }

    penalty_map child_penalty_vector(node_id id) const;

    std::string decoded_text(node_id id) const;
    // Text of the active path; the prompt is never part of the tree.
    const std::string & active_text() const { return text_; }
    std::string final_code() const { return text_; }

    node_id locate(int lineno, int offset) const;
    node_id locate(rollback_point r) const { return locate(r.lineno, r.offset); }
    int token_index_to_lineno(std::size_t t) const;

    // Byte range of the token at step t in `active_text()`.
    std::size_t token_start(std::size_t t) const;
    std::size_t token_end(std::size_t t) const;

    // (lineno, column) of a byte offset into `active_text()`.
    rollback_point position_of(std::size_t byte_offset) const;
    // Inverse of `position_of`; throws std::out_of_range past the text.
    std::size_t byte_offset_of(int lineno, int offset) const;

    // Per-token entropies along the active path.
    std::vector<double> entropy_trace() const;

    void add_report(error_report r) { reports_.push_back(std::move(r)); }
    std::span<const error_report> reports() const { return reports_; }

    // One node per line, indented by depth: `text | step | penalty | flags`.
    std::string dump() const;

private:
    std::optional<node_id> find_child(node_id parent, token_id token) const;
    void dump_node(std::string & out, node_id id, int depth) const;

    std::vector<token_node> nodes_;
    node_id current_{0};
    std::vector<node_id> path_;
    std::vector<std::size_t> ends_;  // ends_[i] = byte end of token i in text_
    std::string text_;
    std::vector<node_id> boundaries_;
    std::vector<node_id> abandoned_;
    std::vector<error_report> reports_;
    std::size_t total_emitted_ = 0;
    std::size_t rollbacks_ = 0;
};

} // namespace rollgen
