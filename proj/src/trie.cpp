#include "rollgen/trie.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace rollgen {

namespace {

bool is_continuation_byte(char c) {
    return (static_cast<unsigned char>(c) & 0xC0) == 0x80;
}

} // namespace

generation_tree::generation_tree() {
    nodes_.emplace_back();
}

std::optional<node_id> generation_tree::find_child(node_id parent, token_id token) const {
    for (const node_id child : nodes_[parent.value].children) {
        if (nodes_[child.value].token == token) {
            return child;
        }
    }
    return std::nullopt;
}

node_id generation_tree::append_token(token_id token, std::string_view text, double entropy) {
    ++total_emitted_;

    node_id next;
    if (auto existing = find_child(current_, token)) {
        next = *existing;
        nodes_[next.value].entropy = entropy;
    } else {
        token_node n;
        n.token   = token;
        n.text    = std::string(text);
        n.step    = nodes_[current_.value].step + 1;
        n.entropy = entropy;
        n.parent  = current_;
        next      = node_id{static_cast<std::uint32_t>(nodes_.size())};
        nodes_.push_back(std::move(n));
        nodes_[current_.value].children.push_back(next);
    }

    current_ = next;
    path_.push_back(next);
    text_ += nodes_[next.value].text;
    ends_.push_back(text_.size());
    return next;
}

void generation_tree::mark_statement() {
    if (!boundaries_.empty() && boundaries_.back() == current_) {
        throw std::logic_error("mark_statement: current node is already a statement boundary");
    }
    if (current_ == root()) {
        throw std::logic_error("mark_statement: empty statement");
    }
    boundaries_.push_back(current_);
}

node_id generation_tree::rollback_to(rollback_point r) {
    const node_id target = locate(r);
    const int keep = nodes_[target.value].step + 1;  // tokens kept on the path

    abandoned_.assign(path_.begin() + keep, path_.end());
    for (const node_id id : abandoned_) {
        nodes_[id.value].error_flag = true;
    }
    if (!abandoned_.empty()) {
        ++rollbacks_;
    }

    path_.resize(keep);
    ends_.resize(keep);
    text_.resize(keep == 0 ? 0 : ends_.back());
    current_ = target;

    const int target_step = nodes_[target.value].step;
    std::erase_if(boundaries_, [&](node_id b) { return nodes_[b.value].step > target_step; });
    return target;
}

void generation_tree::apply_penalties(node_id r_node, double lambda, int exponent_offset) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw std::invalid_argument("apply_penalties: lambda must lie in (0, 1)");
    }
    if (abandoned_.empty()) {
        return;
    }
    if (nodes_[abandoned_.front().value].parent != r_node) {
        throw std::logic_error("apply_penalties: r_node is not the last rollback target");
    }
    const int first_step = nodes_[r_node.value].step + 1;
    for (const node_id id : abandoned_) {
        token_node & n    = nodes_[id.value];
        const int exponent = std::max(0, n.step - first_step + exponent_offset);
        n.penalty          = std::max(n.penalty * std::pow(lambda, exponent), k_penalty_floor);
    }
}

void generation_tree::block_abandoned(node_id r_node) {
    if (abandoned_.empty()) {
        return;
    }
    if (nodes_[abandoned_.front().value].parent != r_node) {
        throw std::logic_error("block_abandoned: r_node is not the last rollback target");
    }
    for (const node_id id : abandoned_) {
        nodes_[id.value].penalty = k_penalty_floor;
    }
}

penalty_map generation_tree::child_penalty_vector(node_id id) const {
    penalty_map out;
    for (const node_id child : nodes_.at(id.value).children) {
        out.emplace(nodes_[child.value].token, nodes_[child.value].penalty);
    }
    return out;
}

std::string generation_tree::decoded_text(node_id id) const {
    std::vector<node_id> chain;
    for (std::optional<node_id> cur = id; cur && *cur != root(); cur = nodes_.at(cur->value).parent) {
        chain.push_back(*cur);
    }
    std::string out;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        out += nodes_[it->value].text;
    }
    return out;
}

std::size_t generation_tree::token_start(std::size_t t) const {
    if (t >= path_.size()) {
        throw std::out_of_range("token index beyond the active path");
    }
    return t == 0 ? 0 : ends_[t - 1];
}

std::size_t generation_tree::token_end(std::size_t t) const {
    if (t >= path_.size()) {
        throw std::out_of_range("token index beyond the active path");
    }
    return ends_[t];
}

int generation_tree::token_index_to_lineno(std::size_t t) const {
    const std::size_t start = token_start(t);
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(start), '\n'));
}

rollback_point generation_tree::position_of(std::size_t byte_offset) const {
    if (byte_offset > text_.size()) {
        throw std::out_of_range("byte offset beyond the active text");
    }
    rollback_point p;
    std::size_t line_start = 0;
    for (std::size_t i = 0; i < byte_offset; ++i) {
        if (text_[i] == '\n') {
            ++p.lineno;
            line_start = i + 1;
        }
    }
    for (std::size_t i = line_start; i < byte_offset; ++i) {
        if (!is_continuation_byte(text_[i])) {
            ++p.offset;
        }
    }
    return p;
}

std::size_t generation_tree::byte_offset_of(int lineno, int offset) const {
    if (lineno < 1 || offset < 0) {
        throw std::out_of_range("rollback point must have lineno >= 1 and offset >= 0");
    }
    std::size_t pos = 0;
    for (int line = 1; line < lineno; ++line) {
        const std::size_t nl = text_.find('\n', pos);
        if (nl == std::string::npos) {
            throw std::out_of_range("rollback point beyond the active text");
        }
        pos = nl + 1;
    }
    // Columns past the end of the line clamp to the line end.
    for (int col = 0; col < offset && pos < text_.size() && text_[pos] != '\n'; ++col) {
        ++pos;
        while (pos < text_.size() && is_continuation_byte(text_[pos])) {
            ++pos;
        }
    }
    return pos;
}

node_id generation_tree::locate(int lineno, int offset) const {
    const std::size_t pos = byte_offset_of(lineno, offset);
    // A token is kept when it ends at or before pos; an empty token sitting
    // exactly at pos is not, so it is regenerated together with what follows.
    std::size_t keep = 0;
    while (keep < path_.size()) {
        const std::size_t end   = ends_[keep];
        const bool        empty = nodes_[path_[keep].value].text.empty();
        if (empty ? end < pos : end <= pos) {
            ++keep;
        } else {
            break;
        }
    }
    return keep == 0 ? root() : path_[keep - 1];
}

std::vector<double> generation_tree::entropy_trace() const {
    std::vector<double> out;
    out.reserve(path_.size());
    for (const node_id id : path_) {
        out.push_back(nodes_[id.value].entropy);
    }
    return out;
}

std::string generation_tree::dump() const {
    std::string out;
    dump_node(out, root(), 0);
    return out;
}

void generation_tree::dump_node(std::string & out, node_id id, int depth) const {
    const token_node & n = nodes_[id.value];
    out.append(static_cast<std::size_t>(depth) * 2, ' ');
    out += id == root() ? std::string("<root>") : nlohmann::json(n.text).dump();

    char buf[64];
    std::snprintf(buf, sizeof(buf), " | %d | %.6g | ", n.step, n.penalty);
    out += buf;

    std::string flags;
    if (n.error_flag) {
        flags += 'E';
    }
    if (std::find(boundaries_.begin(), boundaries_.end(), id) != boundaries_.end()) {
        flags += 'S';
    }
    if (id == current_) {
        flags += 'C';
    }
    out += flags.empty() ? "-" : flags;
    out += '\n';

    for (const node_id child : n.children) {
        dump_node(out, child, depth + 1);
    }
}

} // namespace rollgen
