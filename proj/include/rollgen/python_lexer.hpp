#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rollgen::python {

enum class token_kind { name, number, string, op, newline };

struct token {
    token_kind kind;
    std::string text;
    int line;  // 1-based
    int col;   // 0-based, code points
};

struct bracket {
    char ch;
    int line;
    int col;
};

struct lex_error {
    std::string message;
    int line;
    int col;
};

// One logical line: tokens [first, last) of `lex_result::tokens`, NEWLINE excluded.
struct logical_line {
    std::size_t first;
    std::size_t last;
    int indent;  // columns, tabs advance to the next multiple of 8
    int line;
};

//
// Tokenization of (possibly partial) Python source. Lexing never stops at the
// first problem: `error` keeps the first one, the rest of the text is still
// tokenized so that callers can inspect the final state.
//
struct lex_result {
    std::vector<token> tokens;
    std::vector<logical_line> lines;

    std::optional<lex_error> error;

    // State at end of input.
    std::vector<bracket> open_brackets;
    bool in_triple_string = false;
    int string_line = 0;
    int string_col = 0;
    bool continuation = false;  // input ends after a backslash-newline
    bool has_code = false;      // any token besides NEWLINE
};

lex_result tokenize(std::string_view source);

bool is_keyword(std::string_view word);

} // namespace rollgen::python
