#pragma once

#include "rollgen/report.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rollgen {

//
// Analyzer wire contract: one JSON object per line in each direction, UTF-8,
// responses in request order. See docs/analyzer-protocol.md.
//

enum class analyze_mode { compile, parse_tree, run, run_tests };

std::string_view to_string(analyze_mode m);
std::optional<analyze_mode> parse_analyze_mode(std::string_view s);

struct analyze_request {
    analyze_mode mode = analyze_mode::compile;
    std::string code;
    std::optional<std::string> test_input;
    std::optional<std::string> expected_output;
    int timeout_ms = 2000;
    int memory_limit_mb = 256;
};

// One statement of the parsed program, in source order.
struct stmt_info {
    int id = 0;          // index in the statement list
    std::string kind;    // abstract-syntax statement kind, e.g. "Assign", "Expr", "If"
    int lineno = 1;
    std::string block;   // "module" or "<parent id>.<field>", e.g. "3.body", "3.orelse"
};

struct analyze_response {
    error_report report;
    // Syntax failure caused only by the input ending early.
    bool incomplete = false;
    std::vector<std::string> stmt_kinds;  // top-level statements (parse_tree)
    std::vector<stmt_info> stmts;         // all statements (parse_tree)
    std::string stdout_text;
    std::string stderr_text;
};

inline constexpr std::size_t k_max_capture_bytes = 64 * 1024;

nlohmann::json to_json(const analyze_request & r);
analyze_request request_from_json(const nlohmann::json & j);
nlohmann::json to_json(const analyze_response & r);
analyze_response response_from_json(const nlohmann::json & j);

// Thrown when the analyzer itself misbehaves; never describes the code.
class analyzer_error : public infrastructure_error {
public:
    using infrastructure_error::infrastructure_error;
};

class analyzer {
public:
    virtual ~analyzer() = default;
    virtual analyze_response analyze(const analyze_request & request) = 0;
};

// Speaks the wire format to an in-process line handler. Every call is encoded
// and decoded exactly as it would be over a pipe.
class wire_analyzer : public analyzer {
public:
    using line_handler = std::function<std::string(std::string_view)>;

    explicit wire_analyzer(line_handler handler) : handler_(std::move(handler)) {}

    analyze_response analyze(const analyze_request & request) override;

private:
    line_handler handler_;
};

//
// Drives an analyzer worker executable over stdin/stdout. The worker is
// restarted once if it dies; a second failure surfaces as analyzer_error.
//
class process_analyzer : public analyzer {
public:
    explicit process_analyzer(std::vector<std::string> argv, int response_timeout_ms = 30000);
    ~process_analyzer() override;

    process_analyzer(const process_analyzer &) = delete;
    process_analyzer & operator=(const process_analyzer &) = delete;

    analyze_response analyze(const analyze_request & request) override;

    // Path from ROLLGEN_SANDBOX, if set.
    static std::optional<std::string> sandbox_from_env();

private:
    void start();
    void stop();
    std::string round_trip(const std::string & line, int timeout_ms);

    std::vector<std::string> argv_;
    int response_timeout_ms_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

} // namespace rollgen
