#include "rollgen/python_lexer.hpp"

#include <algorithm>
#include <iterator>
#include <cctype>

namespace rollgen::python {

namespace {

constexpr std::string_view k_keywords[] = {
    "False", "None",   "True",    "and",      "as",     "assert", "async", "await",    "break",
    "class", "continue", "def",   "del",      "elif",   "else",   "except", "finally", "for",
    "from",  "global", "if",      "import",   "in",     "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise",   "return",   "try",    "while",  "with",  "yield",
};

// Longest operators first.
constexpr std::string_view k_operators[] = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=",
    "&=",  "|=",  "^=",  "@=",  "**",  "//", "<<", ">>", "+",  "-",  "*",  "/",  "%",  "@",  "&",  "|",
    "^",   "~",   "<",   ">",   "=",   ".",  ",",  ":",  ";",  "(",  ")",  "[",  "]",  "{",  "}",
};

bool is_name_start(unsigned char c) {
    return std::isalpha(c) || c == '_' || c >= 0x80;
}

bool is_name_char(unsigned char c) {
    return std::isalnum(c) || c == '_' || c >= 0x80;
}

char matching_open(char close) {
    switch (close) {
        case ')': return '(';
        case ']': return '[';
        default:  return '{';
    }
}

class lexer {
public:
    explicit lexer(std::string_view src) : src_(src) {}

    lex_result run() {
        bool at_line_start = true;
        bool line_active   = false;
        logical_line current{};

        while (i_ < src_.size()) {
            if (at_line_start && out_.open_brackets.empty()) {
                int indent = 0;
                while (i_ < src_.size() && (src_[i_] == ' ' || src_[i_] == '\t' || src_[i_] == '\f')) {
                    indent = src_[i_] == '\t' ? (indent / 8 + 1) * 8 : indent + 1;
                    advance();
                }
                if (i_ >= src_.size()) {
                    break;
                }
                const char c = src_[i_];
                if (c == '\n' || c == '#' || c == '\r') {
                    skip_comment();
                    if (i_ < src_.size() && src_[i_] == '\r') {
                        advance();
                    }
                    if (i_ < src_.size() && src_[i_] == '\n') {
                        newline();
                    }
                    continue;
                }
                current       = logical_line{out_.tokens.size(), 0, indent, line_};
                line_active   = true;
                at_line_start = false;
            }

            const char c = src_[i_];
            if (c == '#') {
                skip_comment();
            } else if (c == '\\') {
                advance();
                if (i_ < src_.size() && src_[i_] == '\r') {
                    advance();
                }
                if (i_ >= src_.size()) {
                    out_.continuation = true;
                } else if (src_[i_] == '\n') {
                    newline();
                    out_.continuation = i_ >= src_.size();
                } else {
                    fail("unexpected character after line continuation character", line_, col_ - 1);
                }
            } else if (c == '\n') {
                if (out_.open_brackets.empty() && line_active) {
                    emit(token_kind::newline, "\n", line_, col_);
                    current.last = out_.tokens.size() - 1;
                    out_.lines.push_back(current);
                    line_active   = false;
                    at_line_start = true;
                }
                newline();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
                advance();
            } else if (starts_string()) {
                lex_string();
            } else if (is_name_start(static_cast<unsigned char>(c))) {
                lex_name();
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
                lex_number();
            } else {
                lex_operator();
            }
        }

        if (line_active) {
            current.last = out_.tokens.size();
            if (current.last > current.first) {
                out_.lines.push_back(current);
            }
        }
        return std::move(out_);
    }

private:
    void advance() {
        if ((static_cast<unsigned char>(src_[i_]) & 0xC0) != 0x80) {
            ++col_;
        }
        ++i_;
    }

    void newline() {
        ++i_;
        ++line_;
        col_ = 0;
    }

    void skip_comment() {
        while (i_ < src_.size() && src_[i_] != '\n') {
            advance();
        }
    }

    void fail(std::string message, int line, int col) {
        if (!out_.error) {
            out_.error = lex_error{std::move(message), line, col};
        }
    }

    void emit(token_kind kind, std::string text, int line, int col) {
        if (kind != token_kind::newline) {
            out_.has_code = true;
        }
        out_.tokens.push_back(token{kind, std::move(text), line, col});
    }

    bool starts_string() const {
        std::size_t j = i_;
        while (j < src_.size() && j - i_ < 2 && std::string_view("rRbBuUfF").find(src_[j]) != std::string_view::npos) {
            ++j;
        }
        return j < src_.size() && (src_[j] == '\'' || src_[j] == '"');
    }

    void lex_string() {
        const int line = line_;
        const int col  = col_;
        const std::size_t begin = i_;
        while (src_[i_] != '\'' && src_[i_] != '"') {
            advance();
        }
        const char quote = src_[i_];
        const bool triple = i_ + 2 < src_.size() && src_[i_ + 1] == quote && src_[i_ + 2] == quote;
        for (int k = 0; k < (triple ? 3 : 1); ++k) {
            advance();
        }

        bool closed = false;
        while (i_ < src_.size()) {
            const char c = src_[i_];
            if (c == '\\') {
                advance();
                if (i_ < src_.size()) {
                    if (src_[i_] == '\n') {
                        newline();
                    } else {
                        advance();
                    }
                }
                continue;
            }
            if (c == '\n') {
                if (!triple) {
                    break;
                }
                newline();
                continue;
            }
            if (c == quote) {
                if (!triple) {
                    advance();
                    closed = true;
                    break;
                }
                if (i_ + 2 < src_.size() && src_[i_ + 1] == quote && src_[i_ + 2] == quote) {
                    advance();
                    advance();
                    advance();
                    closed = true;
                    break;
                }
            }
            advance();
        }

        if (!closed) {
            if (triple) {
                out_.in_triple_string = true;
                out_.string_line      = line;
                out_.string_col       = col;
                fail("unterminated triple-quoted string literal (detected at line " + std::to_string(line_) + ")",
                     line, col);
            } else {
                fail("unterminated string literal (detected at line " + std::to_string(line) + ")", line, col);
            }
        }
        emit(token_kind::string, std::string(src_.substr(begin, i_ - begin)), line, col);
    }

    void lex_name() {
        const int col = col_;
        const std::size_t begin = i_;
        while (i_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[i_]))) {
            advance();
        }
        emit(token_kind::name, std::string(src_.substr(begin, i_ - begin)), line_, col);
    }

    void lex_number() {
        const int col = col_;
        const std::size_t begin = i_;
        while (i_ < src_.size()) {
            const char c = src_[i_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
                const bool exponent = (c == 'e' || c == 'E') && i_ + 1 < src_.size() &&
                                      (src_[i_ + 1] == '+' || src_[i_ + 1] == '-');
                advance();
                if (exponent) {
                    advance();
                }
            } else {
                break;
            }
        }
        emit(token_kind::number, std::string(src_.substr(begin, i_ - begin)), line_, col);
    }

    void lex_operator() {
        const int col = col_;
        for (const std::string_view op : k_operators) {
            if (src_.substr(i_, op.size()) == op) {
                for (std::size_t k = 0; k < op.size(); ++k) {
                    advance();
                }
                const char c = op.front();
                if (op.size() == 1 && (c == '(' || c == '[' || c == '{')) {
                    out_.open_brackets.push_back(bracket{c, line_, col});
                } else if (op.size() == 1 && (c == ')' || c == ']' || c == '}')) {
                    close_bracket(c, col);
                }
                emit(token_kind::op, std::string(op), line_, col);
                return;
            }
        }
        const unsigned char bad = static_cast<unsigned char>(src_[i_]);
        fail(std::string("invalid character '") + static_cast<char>(bad) + "'", line_, col);
        advance();
    }

    void close_bracket(char c, int col) {
        if (out_.open_brackets.empty()) {
            fail(std::string("unmatched '") + c + "'", line_, col);
            return;
        }
        const bracket open = out_.open_brackets.back();
        if (open.ch != matching_open(c)) {
            std::string msg = std::string("closing parenthesis '") + c + "' does not match opening parenthesis '" +
                              open.ch + "'";
            if (open.line != line_) {
                msg += " on line " + std::to_string(open.line);
            }
            fail(std::move(msg), line_, col);
        }
        out_.open_brackets.pop_back();
    }

    std::string_view src_;
    std::size_t i_ = 0;
    int line_ = 1;
    int col_ = 0;
    lex_result out_;
};

} // namespace

lex_result tokenize(std::string_view source) {
    return lexer(source).run();
}

bool is_keyword(std::string_view word) {
    return std::find(std::begin(k_keywords), std::end(k_keywords), word) != std::end(k_keywords);
}

} // namespace rollgen::python
