#include "rollgen/error_detection.hpp"

#include "rollgen/python_lexer.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace rollgen {

bool statement_segmenter::closes_statement(std::string_view text_before_newline) const {
    switch (lang_) {
        case language::python: {
            const auto lex = python::tokenize(text_before_newline);
            return lex.has_code && lex.open_brackets.empty() && !lex.in_triple_string && !lex.continuation;
        }
    }
    return false;
}

bool statement_segmenter::push(std::string_view token_text) {
    bool boundary = false;
    for (const char c : token_text) {
        if (c == '\n' && closes_statement(pending_)) {
            boundary = true;
            pending_.clear();
            continue;
        }
        pending_ += c;
    }
    return boundary;
}

void statement_segmenter::reset(std::string_view text) {
    pending_.clear();
    push(text);
}

int last_content_line(std::string_view code) {
    int line = 1;
    int last = 0;
    for (const char c : code) {
        if (c == '\n') {
            ++line;
        } else if (c != ' ' && c != '\t' && c != '\r' && c != '\f') {
            last = line;
        }
    }
    return last;
}

analyze_response error_detector::call(analyze_mode mode, std::string_view code, const detect_options & options,
                                      const test_case * test) {
    analyze_request request;
    request.mode            = mode;
    request.code            = std::string(code);
    request.timeout_ms      = options.timeout_ms;
    request.memory_limit_mb = options.memory_limit_mb;
    if (test != nullptr) {
        request.test_input = test->input;
        if (mode == analyze_mode::run_tests) {
            request.expected_output = test->expected_output;
        }
    }
    return backend_.analyze(request);
}

error_report error_detector::detect(std::string_view code, check_phase phase, std::span<const test_case> tests,
                                    const detect_options & options) {
    last_incomplete_ = false;

    if (phase == check_phase::full_tests &&
        std::none_of(tests.begin(), tests.end(), [](const test_case & t) { return t.expected_output.has_value(); })) {
        throw std::invalid_argument("full_tests requires at least one test with an expected output");
    }

    const analyze_response compiled = call(analyze_mode::compile, code, options);
    if (compiled.report.failed()) {
        const bool at_end = !compiled.report.lineno || *compiled.report.lineno >= last_content_line(code);
        if (compiled.incomplete && !options.final && at_end) {
            last_incomplete_ = true;
            return error_report::ok();
        }
        return compiled.report;
    }

    if (phase == check_phase::static_only) {
        return error_report::ok();
    }

    for (const test_case & test : tests) {
        const bool compare = phase == check_phase::full_tests && test.expected_output.has_value();
        const analyze_response ran = call(compare ? analyze_mode::run_tests : analyze_mode::run, code, options, &test);
        if (ran.report.failed()) {
            return ran.report;
        }
    }
    return error_report::ok();
}

error_report error_detector::detect_repetition(std::string_view code, int threshold, const detect_options & options) {
    if (threshold < 1) {
        throw std::invalid_argument("repetition threshold must be >= 1");
    }
    const analyze_response parsed = call(analyze_mode::parse_tree, code, options);
    if (parsed.report.failed()) {
        // no syntax tree to inspect; syntax problems are reported by detect()
        return error_report::ok();
    }
    return find_repetition(parsed.stmts, threshold);
}

error_report find_repetition(std::span<const stmt_info> stmts, int threshold) {
    if (threshold < 1) {
        throw std::invalid_argument("repetition threshold must be >= 1");
    }

    std::optional<int> first_line;
    auto note = [&](int lineno) {
        if (!first_line || lineno < *first_line) {
            first_line = lineno;
        }
    };

    std::map<std::string, std::vector<const stmt_info *>> blocks;
    for (const auto & s : stmts) {
        blocks[s.block].push_back(&s);
    }

    // Consecutive statements of one kind inside a block.
    for (const auto & [name, seq] : blocks) {
        std::size_t run_start = 0;
        for (std::size_t i = 1; i <= seq.size(); ++i) {
            if (i == seq.size() || seq[i]->kind != seq[run_start]->kind) {
                if (i - run_start > static_cast<std::size_t>(threshold)) {
                    note(seq[run_start]->lineno);
                }
                run_start = i;
            }
        }
    }

    // if/elif chains: an `elif` is an If that is the only statement of its parent's orelse.
    auto elif_child = [&](const stmt_info & s) -> const stmt_info * {
        auto it = blocks.find(std::to_string(s.id) + ".orelse");
        if (it == blocks.end() || it->second.size() != 1 || it->second.front()->kind != "If") {
            return nullptr;
        }
        return it->second.front();
    };
    std::vector<bool> is_elif(stmts.size(), false);
    for (const auto & s : stmts) {
        if (s.kind == "If") {
            if (const stmt_info * child = elif_child(s)) {
                if (child->id >= 0 && static_cast<std::size_t>(child->id) < is_elif.size()) {
                    is_elif[static_cast<std::size_t>(child->id)] = true;
                }
            }
        }
    }
    for (const auto & s : stmts) {
        if (s.kind != "If" || (s.id >= 0 && static_cast<std::size_t>(s.id) < is_elif.size() && is_elif[s.id])) {
            continue;
        }
        int arms = 1;
        for (const stmt_info * cur = elif_child(s); cur != nullptr; cur = elif_child(*cur)) {
            ++arms;
        }
        if (arms > threshold) {
            note(s.lineno);
        }
    }

    if (!first_line) {
        return error_report::ok();
    }
    return error_report::failure(error_type::repetition, first_line, std::nullopt,
                                 "statement kind repeated more than " + std::to_string(threshold) + " times");
}

} // namespace rollgen
