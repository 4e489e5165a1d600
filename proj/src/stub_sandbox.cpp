#include "rollgen/stub_sandbox.hpp"

#include "rollgen/python_lexer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

using json = nlohmann::json;

namespace rollgen {

namespace {

using python::token;
using python::token_kind;

const std::set<std::string, std::less<>> k_binary_only = {
    "=",  "==", "!=", "<=", ">=", "<",  ">",  "/",  "//", "%",   "|",   "&",   "^",  "<<", ">>", "+=",
    "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=", "<<=", "**=", ":=", "->",
};

const std::set<std::string, std::less<>> k_no_leading = {
    "=",  "==", "!=", "<=", ">=", "<",  ">",  "/",  "//", "%",   "|",   "&",   "^", "<<", ">>", "+=", "-=",
    "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=", "<<=", "**=", ":=", "->", ")",  "]",  "}",  ",", ":",
};

const std::set<std::string, std::less<>> k_augmented = {
    "+=", "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=", "<<=", "**=",
};

const std::set<std::string, std::less<>> k_operator_keywords = {"and", "or", "not", "in", "is", "if", "else"};

bool is_value_keyword(const std::string & w) {
    return w == "True" || w == "False" || w == "None";
}

bool is_operand(const token & t) {
    if (t.kind == token_kind::number || t.kind == token_kind::string) {
        return true;
    }
    return t.kind == token_kind::name && (!python::is_keyword(t.text) || is_value_keyword(t.text));
}

bool ends_operand(const token & t) {
    return is_operand(t) || (t.kind == token_kind::op && (t.text == ")" || t.text == "]" || t.text == "}"));
}

bool is_op(const token & t, std::string_view text) {
    return t.kind == token_kind::op && t.text == text;
}

bool is_name(const token & t, std::string_view text) {
    return t.kind == token_kind::name && t.text == text;
}

struct outline_builder {
    struct compound {
        std::string kind;  // If, For, While, Try, Match; empty when the last statement was simple
        int id = -1;
        int arm = -1;       // latest if/elif arm
        bool closed = false;  // an else/finally clause has been seen
        int handlers = 0;
    };

    struct block {
        int indent;
        std::string name;
        bool in_def;
        bool in_loop;
        compound last;
    };

    struct pending_body {
        std::string name;
        std::string keyword;
        int header_line;
        int header_col;
        bool in_def;
        bool in_loop;
    };

    const python::lex_result & lex;
    python_outline out;
    std::vector<block> stack{block{0, "module", false, false, {}}};
    std::optional<pending_body> pending;
    bool pending_decorator = false;
    int decorator_line = 0;

    explicit outline_builder(const python::lex_result & l) : lex(l) {}

    void issue(std::string message, int line, int col, bool incomplete = false) {
        if (!out.issue || std::pair(line, col) < std::pair(out.issue->lineno, out.issue->offset)) {
            out.issue = syntax_issue{std::move(message), line, col, incomplete};
        }
    }

    int add_stmt(std::string kind, int line, const std::string & block_name) {
        const int id = static_cast<int>(out.stmts.size());
        out.stmts.push_back(stmt_info{id, kind, line, block_name});
        if (block_name == "module") {
            out.top_level_kinds.push_back(std::move(kind));
        }
        return id;
    }

    // Operator placement and operand juxtaposition inside [first, last).
    // `unfinished` marks a line cut off by the end of input.
    void check_expression(std::size_t first, std::size_t last, bool unfinished) {
        if (first >= last) {
            return;
        }
        const auto & toks = lex.tokens;
        const token & lead = toks[first];
        if (lead.kind == token_kind::op && k_no_leading.count(lead.text) != 0) {
            issue("invalid syntax", lead.line, lead.col);
            return;
        }
        for (std::size_t i = first; i + 1 < last; ++i) {
            const token & a = toks[i];
            const token & b = toks[i + 1];
            if (ends_operand(a) && is_operand(b) &&
                !(a.kind == token_kind::string && b.kind == token_kind::string)) {
                issue("invalid syntax. Perhaps you forgot a comma?", a.line, a.col);
                return;
            }
            if (a.kind == token_kind::op && b.kind == token_kind::op && k_binary_only.count(a.text) != 0 &&
                k_binary_only.count(b.text) != 0) {
                issue("invalid syntax", b.line, b.col);
                return;
            }
        }
        const token & tail = toks[last - 1];
        const bool dangling = (tail.kind == token_kind::op && (k_binary_only.count(tail.text) != 0 ||
                                                               tail.text == "+" || tail.text == "-" ||
                                                               tail.text == "*" || tail.text == "**" ||
                                                               tail.text == "." || tail.text == "~")) ||
                              (tail.kind == token_kind::name && k_operator_keywords.count(tail.text) != 0);
        if (dangling && !unfinished) {
            issue("invalid syntax", tail.line, tail.col);
        }
    }

    // `f(:`, `g(,`, `{=}`: a separator or binary operator right after an opener.
    void check_openers(std::size_t first, std::size_t last) {
        const auto & toks = lex.tokens;
        for (std::size_t i = first; i + 1 < last; ++i) {
            const token & a = toks[i];
            const token & b = toks[i + 1];
            if (a.kind != token_kind::op || b.kind != token_kind::op || (a.text != "(" && a.text != "{")) {
                continue;
            }
            if (b.text == ":" || b.text == "," || k_binary_only.count(b.text) != 0) {
                issue("invalid syntax", b.line, b.col);
                return;
            }
        }
    }

    std::string classify_simple(std::size_t first, std::size_t last) const {
        const auto & toks = lex.tokens;
        const token & lead = toks[first];
        if (lead.kind == token_kind::name) {
            static const std::pair<std::string_view, std::string_view> keyword_kinds[] = {
                {"return", "Return"}, {"del", "Delete"},        {"pass", "Pass"},     {"break", "Break"},
                {"continue", "Continue"}, {"raise", "Raise"},   {"global", "Global"}, {"nonlocal", "Nonlocal"},
                {"assert", "Assert"}, {"import", "Import"},     {"from", "ImportFrom"},
            };
            for (const auto & [kw, kind] : keyword_kinds) {
                if (lead.text == kw) {
                    return std::string(kind);
                }
            }
        }
        int depth = 0;
        bool saw_colon = false;
        for (std::size_t i = first; i < last; ++i) {
            const token & t = toks[i];
            if (t.kind != token_kind::op) {
                continue;
            }
            if (t.text == "(" || t.text == "[" || t.text == "{") {
                ++depth;
            } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                --depth;
            } else if (depth == 0) {
                if (k_augmented.count(t.text) != 0) {
                    return "AugAssign";
                }
                if (t.text == ":") {
                    saw_colon = true;
                }
                if (t.text == "=") {
                    return saw_colon ? "AnnAssign" : "Assign";
                }
            }
        }
        return saw_colon && lead.kind == token_kind::name ? "AnnAssign" : "Expr";
    }

    void check_assign_target(std::size_t first, std::size_t last) {
        const auto & toks = lex.tokens;
        for (std::size_t i = first + 1; i < last; ++i) {
            if (is_op(toks[i], "=")) {
                if (i == first + 1 &&
                    (toks[first].kind == token_kind::number || toks[first].kind == token_kind::string ||
                     is_value_keyword(toks[first].text))) {
                    issue("cannot assign to literal", toks[first].line, toks[first].col);
                }
                return;
            }
        }
    }

    void simple_statement(std::size_t first, std::size_t last, const block & where, int line, bool unfinished) {
        if (first >= last) {
            return;
        }
        const auto & toks = lex.tokens;
        const token & lead = toks[first];

        if ((is_name(lead, "return") || is_name(lead, "yield")) && !where.in_def) {
            issue("'" + lead.text + "' outside function", lead.line, lead.col);
        }
        if ((is_name(lead, "break") || is_name(lead, "continue")) && !where.in_loop) {
            issue("'" + lead.text + "' " + (lead.text == "break" ? "outside loop" : "not properly in loop"),
                  lead.line, lead.col);
        }
        if (lead.kind == token_kind::name && python::is_keyword(lead.text) && !is_value_keyword(lead.text)) {
            // keyword statements: check what follows the keyword
            check_expression(first + 1, last, unfinished);
        } else {
            check_expression(first, last, unfinished);
            check_assign_target(first, last);
        }
        add_stmt(classify_simple(first, last), line, where.name);
    }

    // Splits [first, last) at depth-0 semicolons.
    void simple_statements(std::size_t first, std::size_t last, const block & where, int line, bool unfinished) {
        const auto & toks = lex.tokens;
        int depth = 0;
        std::size_t start = first;
        for (std::size_t i = first; i < last; ++i) {
            const token & t = toks[i];
            if (t.kind == token_kind::op) {
                if (t.text == "(" || t.text == "[" || t.text == "{") {
                    ++depth;
                } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                    --depth;
                } else if (t.text == ";" && depth == 0) {
                    simple_statement(start, i, where, line, false);
                    start = i + 1;
                }
            }
        }
        simple_statement(start, last, where, line, unfinished);
    }

    std::optional<std::size_t> header_colon(std::size_t first, std::size_t last) const {
        int depth = 0;
        int lambdas = 0;
        for (std::size_t i = first; i < last; ++i) {
            const token & t = lex.tokens[i];
            if (t.kind == token_kind::op) {
                if (t.text == "(" || t.text == "[" || t.text == "{") {
                    ++depth;
                } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                    --depth;
                } else if (t.text == ":" && depth == 0) {
                    if (lambdas > 0) {
                        --lambdas;
                    } else {
                        return i;
                    }
                }
            } else if (depth == 0 && is_name(t, "lambda")) {
                ++lambdas;
            }
        }
        return std::nullopt;
    }

    void logical(const python::logical_line & line, bool unfinished) {
        const auto & toks = lex.tokens;
        const std::size_t first = line.first;
        const std::size_t last  = line.last;

        // indentation
        if (pending) {
            if (line.indent > stack.back().indent) {
                stack.push_back(block{line.indent, pending->name, pending->in_def, pending->in_loop, {}});
                pending.reset();
            } else {
                issue("expected an indented block after '" + pending->keyword + "' statement on line " +
                          std::to_string(pending->header_line),
                      line.line, line.indent);
                return;
            }
        } else {
            if (line.indent > stack.back().indent) {
                issue("unexpected indent", line.line, line.indent);
                return;
            }
            while (line.indent < stack.back().indent) {
                stack.pop_back();
            }
            if (line.indent != stack.back().indent) {
                issue("unindent does not match any outer indentation level", line.line, line.indent);
                return;
            }
        }

        check_openers(first, last);
        if (out.issue && !out.issue->incomplete) {
            return;
        }

        block & where = stack.back();
        const token & lead = toks[first];

        if (pending_decorator) {
            const bool ok = is_op(lead, "@") || is_name(lead, "def") || is_name(lead, "class") ||
                            (is_name(lead, "async") && first + 1 < last && is_name(toks[first + 1], "def"));
            pending_decorator = false;
            if (!ok) {
                issue("invalid syntax", lead.line, lead.col);
                return;
            }
        }
        if (is_op(lead, "@")) {
            check_expression(first + 1, last, unfinished);
            pending_decorator = true;
            decorator_line    = line.line;
            return;
        }

        std::string keyword = lead.kind == token_kind::name ? lead.text : std::string();
        std::size_t kw_end  = first + 1;
        if (keyword == "async" && first + 1 < last &&
            (is_name(toks[first + 1], "def") || is_name(toks[first + 1], "for") || is_name(toks[first + 1], "with"))) {
            keyword = "async " + toks[first + 1].text;
            kw_end  = first + 2;
        }

        static const std::set<std::string, std::less<>> headers = {
            "if",  "elif", "else",    "for",    "while",     "def",       "class",      "try",
            "except", "finally", "with", "async def", "async for", "async with",
        };
        bool is_header = headers.count(keyword) != 0;
        if (!is_header && (keyword == "match" || keyword == "case") && last > first + 1 &&
            is_op(toks[last - 1], ":") && toks[first + 1].kind != token_kind::op) {
            is_header = true;
        }
        if (!is_header) {
            where.last = {};
            simple_statements(first, last, where, line.line, unfinished);
            return;
        }

        const auto colon = header_colon(kw_end, last);
        if (!colon) {
            const token & tail = toks[last - 1];
            if (!unfinished) {
                issue("expected ':'", tail.line, tail.col + static_cast<int>(tail.text.size()));
            }
            return;
        }
        if ((keyword == "else" || keyword == "try" || keyword == "finally") && *colon != kw_end) {
            issue("expected ':'", toks[kw_end].line, toks[kw_end].col);
            return;
        }
        if ((keyword == "def" || keyword == "async def")) {
            if (kw_end >= *colon || toks[kw_end].kind != token_kind::name || python::is_keyword(toks[kw_end].text) ||
                kw_end + 1 >= *colon || !is_op(toks[kw_end + 1], "(")) {
                const token & at = kw_end < last ? toks[kw_end] : lead;
                issue("invalid syntax", at.line, at.col);
                return;
            }
        } else if (keyword == "class") {
            if (kw_end >= *colon || toks[kw_end].kind != token_kind::name || python::is_keyword(toks[kw_end].text)) {
                const token & at = kw_end < last ? toks[kw_end] : lead;
                issue("invalid syntax", at.line, at.col);
                return;
            }
        } else if (keyword != "else" && keyword != "try" && keyword != "finally") {
            if (kw_end == *colon && keyword != "except") {
                issue("invalid syntax", toks[*colon].line, toks[*colon].col);
                return;
            }
            check_expression(kw_end, *colon, false);
        }

        // clause bookkeeping
        std::string body_name;
        bool in_def  = where.in_def;
        bool in_loop = where.in_loop;
        compound & prev = where.last;

        if (keyword == "elif") {
            if (prev.kind != "If" || prev.closed) {
                issue("invalid syntax", lead.line, lead.col);
                return;
            }
            const int id = add_stmt("If", line.line, std::to_string(prev.arm) + ".orelse");
            prev.arm     = id;
            body_name    = std::to_string(id) + ".body";
        } else if (keyword == "else") {
            if (prev.closed || prev.kind.empty() || prev.kind == "Match" ||
                (prev.kind == "Try" && prev.handlers == 0)) {
                issue("invalid syntax", lead.line, lead.col);
                return;
            }
            body_name   = std::to_string(prev.kind == "If" ? prev.arm : prev.id) + ".orelse";
            prev.closed = prev.kind != "Try";
        } else if (keyword == "except") {
            if (prev.kind != "Try" || prev.closed) {
                issue("invalid syntax", lead.line, lead.col);
                return;
            }
            body_name = std::to_string(prev.id) + ".handlers" + std::to_string(prev.handlers++);
        } else if (keyword == "finally") {
            if (prev.kind != "Try" || prev.closed) {
                issue("invalid syntax", lead.line, lead.col);
                return;
            }
            body_name   = std::to_string(prev.id) + ".finalbody";
            prev.closed = true;
        } else if (keyword == "case") {
            body_name = where.name + ".case" + std::to_string(line.line);
        } else {
            static const std::pair<std::string_view, std::string_view> kinds[] = {
                {"if", "If"},       {"for", "For"},           {"while", "While"},         {"def", "FunctionDef"},
                {"class", "ClassDef"}, {"try", "Try"},        {"with", "With"},           {"async def", "AsyncFunctionDef"},
                {"async for", "AsyncFor"}, {"async with", "AsyncWith"}, {"match", "Match"},
            };
            std::string kind;
            for (const auto & [kw, k] : kinds) {
                if (keyword == kw) {
                    kind = k;
                }
            }
            const int id = add_stmt(kind, pending_decorator_line(line.line), where.name);
            body_name    = std::to_string(id) + ".body";
            where.last   = compound{};
            if (kind == "If" || kind == "For" || kind == "While" || kind == "Try" || kind == "Match" ||
                kind == "AsyncFor") {
                where.last.kind = kind == "AsyncFor" ? "For" : kind;
                where.last.id   = id;
                where.last.arm  = id;
            }
            if (keyword == "def" || keyword == "async def") {
                in_def  = true;
                in_loop = false;
            } else if (keyword == "class") {
                in_def  = false;
                in_loop = false;
            } else if (keyword == "for" || keyword == "while" || keyword == "async for") {
                in_loop = true;
            }
        }
        decorator_line = 0;

        if (*colon + 1 < last) {
            // inline body: `if x: return 1`
            const block inline_block{line.indent + 1, body_name, in_def, in_loop, {}};
            simple_statements(*colon + 1, last, inline_block, line.line, unfinished);
        } else {
            pending = pending_body{body_name, keyword, line.line, toks[*colon].col, in_def, in_loop};
        }
    }

    int pending_decorator_line(int line) const {
        return decorator_line > 0 ? decorator_line : line;
    }

    python_outline finish() {
        const auto & toks = lex.tokens;
        for (std::size_t k = 0; k < lex.lines.size(); ++k) {
            const auto & line = lex.lines[k];
            const bool terminated = line.last < toks.size() && toks[line.last].kind == token_kind::newline;
            logical(line, !terminated);
            if (out.issue && !out.issue->incomplete) {
                break;
            }
        }

        const int end_line = toks.empty() ? 1 : toks.back().line;
        if (lex.error) {
            const bool incomplete = lex.in_triple_string;
            issue(lex.error->message, incomplete ? end_line : lex.error->line,
                  incomplete ? 0 : lex.error->col, incomplete);
        } else if (!lex.open_brackets.empty()) {
            const auto & b = lex.open_brackets.front();
            if (out.issue && !out.issue->incomplete) {
                // operands juxtaposed inside the bracket: it will never be closed
                out.issue = syntax_issue{std::string("'") + b.ch + "' was never closed", b.line, b.col, false};
            } else {
                issue(std::string("'") + b.ch + "' was never closed", end_line, 0, true);
            }
        } else if (lex.continuation) {
            issue("unexpected EOF while parsing", end_line, 0, true);
        } else if (pending && !out.issue) {
            issue("expected an indented block after '" + pending->keyword + "' statement on line " +
                      std::to_string(pending->header_line),
                  pending->header_line, pending->header_col, true);
        } else if (pending_decorator && !out.issue) {
            issue("unexpected EOF while parsing", end_line, 0, true);
        }
        return std::move(out);
    }
};

int line_of(std::string_view text, std::size_t pos) {
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

int column_of(std::string_view text, std::size_t pos) {
    const std::size_t nl = text.rfind('\n', pos == 0 ? 0 : pos - 1);
    const std::size_t start = (nl == std::string_view::npos || pos == 0) ? 0 : nl + 1;
    int col = 0;
    for (std::size_t i = start; i < pos; ++i) {
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
            ++col;
        }
    }
    return col;
}

} // namespace

python_outline outline_python(std::string_view code) {
    const auto lex = python::tokenize(code);
    outline_builder builder(lex);
    return builder.finish();
}

fault_rule make_fault_rule(std::string pattern, error_type type, std::vector<analyze_mode> modes, bool report_offset) {
    fault_rule r;
    r.compiled = std::regex(pattern, std::regex::ECMAScript);
    r.pattern  = std::move(pattern);
    r.type     = type;
    if (!modes.empty()) {
        r.modes = std::move(modes);
    }
    r.report_offset = report_offset;
    return r;
}

stub_sandbox stub_sandbox::from_json(const json & j) {
    std::vector<fault_rule> rules;
    for (const auto & f : j.value("faults", json::array())) {
        const std::string type_name = f.at("type").get<std::string>();
        const auto type             = parse_error_type(type_name);
        if (!type) {
            throw std::invalid_argument("stub sandbox: unknown error type '" + type_name + "'");
        }
        std::vector<analyze_mode> modes;
        for (const auto & m : f.value("modes", json::array())) {
            const auto mode = parse_analyze_mode(m.get<std::string>());
            if (!mode) {
                throw std::invalid_argument("stub sandbox: unknown mode " + m.dump());
            }
            modes.push_back(*mode);
        }
        fault_rule rule = make_fault_rule(f.at("pattern").get<std::string>(), *type, modes, f.value("offset", false));
        if (f.contains("input")) {
            rule.input_pattern  = f.at("input").get<std::string>();
            rule.input_compiled = std::regex(*rule.input_pattern, std::regex::ECMAScript);
        }
        rule.message = f.value("message", std::string());
        rules.push_back(std::move(rule));
    }
    return stub_sandbox(std::move(rules));
}

stub_sandbox stub_sandbox::load(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open stub sandbox rules '" + path + "'");
    }
    return from_json(json::parse(in));
}

analyze_response stub_sandbox::handle(const analyze_request & request) const {
    analyze_response response;
    const python_outline outline = outline_python(request.code);

    if (outline.issue) {
        const bool tolerate = request.mode == analyze_mode::parse_tree && outline.issue->incomplete;
        if (!tolerate) {
            response.report     = error_report::failure(error_type::syntax, outline.issue->lineno,
                                                        outline.issue->offset, outline.issue->message);
            response.incomplete = outline.issue->incomplete;
            return response;
        }
    }

    if (request.mode == analyze_mode::parse_tree) {
        response.stmts      = outline.stmts;
        response.stmt_kinds = outline.top_level_kinds;
        return response;
    }
    if (request.mode == analyze_mode::compile) {
        return response;
    }

    for (const fault_rule & rule : rules_) {
        if (std::find(rule.modes.begin(), rule.modes.end(), request.mode) == rule.modes.end()) {
            continue;
        }
        if (rule.input_compiled) {
            const std::string input = request.test_input.value_or("");
            if (!std::regex_search(input, *rule.input_compiled)) {
                continue;
            }
        }
        std::smatch m;
        if (!std::regex_search(request.code, m, rule.compiled)) {
            continue;
        }
        const auto pos = static_cast<std::size_t>(m.position(0));
        std::optional<int> lineno;
        std::optional<int> offset;
        if (rule.type != error_type::assertion_failed && rule.type != error_type::timeout) {
            lineno = line_of(request.code, pos);
            if (rule.report_offset) {
                offset = column_of(request.code, pos);
            }
        }
        response.report = error_report::failure(rule.type, lineno, offset,
                                                rule.message.empty() ? std::string(to_string(rule.type)) : rule.message);
        response.stderr_text = response.report.message;
        return response;
    }
    return response;
}

std::string stub_sandbox::handle_line(std::string_view line) const {
    analyze_request request;
    try {
        request = request_from_json(json::parse(line));
    } catch (const std::exception & e) {
        return json{{"error", std::string("bad request: ") + e.what()}}.dump();
    }
    return to_json(handle(request)).dump();
}

wire_analyzer make_stub_analyzer(const stub_sandbox & stub) {
    return wire_analyzer([&stub](std::string_view line) { return stub.handle_line(line); });
}

} // namespace rollgen
