#include "rollgen/analyzer.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>

using json = nlohmann::json;

namespace rollgen {

std::string_view to_string(analyze_mode m) {
    switch (m) {
        case analyze_mode::compile:    return "compile";
        case analyze_mode::parse_tree: return "parse_tree";
        case analyze_mode::run:        return "run";
        case analyze_mode::run_tests:  return "run_tests";
    }
    return "compile";
}

std::optional<analyze_mode> parse_analyze_mode(std::string_view s) {
    for (auto m : {analyze_mode::compile, analyze_mode::parse_tree, analyze_mode::run, analyze_mode::run_tests}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    return std::nullopt;
}

json to_json(const analyze_request & r) {
    json j = {
        {"mode", to_string(r.mode)},
        {"code", r.code},
        {"timeout_ms", r.timeout_ms},
        {"memory_limit_mb", r.memory_limit_mb},
    };
    if (r.test_input) {
        j["test_input"] = *r.test_input;
    }
    if (r.expected_output) {
        j["expected_output"] = *r.expected_output;
    }
    return j;
}

analyze_request request_from_json(const json & j) {
    if (!j.is_object()) {
        throw std::invalid_argument("request must be a JSON object");
    }
    analyze_request r;
    const auto mode = parse_analyze_mode(j.at("mode").get<std::string>());
    if (!mode) {
        throw std::invalid_argument("unknown mode '" + j.at("mode").get<std::string>() + "'");
    }
    r.mode = *mode;
    r.code = j.at("code").get<std::string>();
    if (auto it = j.find("test_input"); it != j.end() && !it->is_null()) {
        r.test_input = it->get<std::string>();
    }
    if (auto it = j.find("expected_output"); it != j.end() && !it->is_null()) {
        r.expected_output = it->get<std::string>();
    }
    r.timeout_ms      = j.value("timeout_ms", r.timeout_ms);
    r.memory_limit_mb = j.value("memory_limit_mb", r.memory_limit_mb);
    if (r.mode == analyze_mode::run_tests && !r.expected_output) {
        throw std::invalid_argument("run_tests requires expected_output");
    }
    if (r.timeout_ms <= 0 || r.memory_limit_mb <= 0) {
        throw std::invalid_argument("timeout_ms and memory_limit_mb must be positive");
    }
    return r;
}

json to_json(const analyze_response & r) {
    json j;
    j["result"] = r.report.failed() ? "failure" : "success";
    if (r.report.failed()) {
        j["type"] = to_string(r.report.type.value_or(error_type::other));
        if (r.report.lineno) {
            j["lineno"] = *r.report.lineno;
        }
        if (r.report.offset) {
            j["offset"] = *r.report.offset;
        }
        if (r.incomplete) {
            j["incomplete"] = true;
        }
    }
    if (!r.report.message.empty()) {
        j["message"] = r.report.message;
    }
    if (!r.stmt_kinds.empty() || !r.stmts.empty()) {
        j["stmt_kinds"] = r.stmt_kinds;
        json stmts = json::array();
        for (const auto & s : r.stmts) {
            stmts.push_back({{"id", s.id}, {"kind", s.kind}, {"lineno", s.lineno}, {"block", s.block}});
        }
        j["stmts"] = std::move(stmts);
    }
    j["stdout"] = r.stdout_text.substr(0, k_max_capture_bytes);
    j["stderr"] = r.stderr_text.substr(0, k_max_capture_bytes);
    return j;
}

analyze_response response_from_json(const json & j) {
    if (!j.is_object()) {
        throw analyzer_error("analyzer response is not a JSON object");
    }
    if (auto it = j.find("error"); it != j.end()) {
        throw analyzer_error("analyzer rejected the request: " + it->dump());
    }
    analyze_response r;
    try {
        const std::string result = j.at("result").get<std::string>();
        if (result == "failure") {
            const std::string type_name = j.value("type", std::string("other"));
            const auto type             = parse_error_type(type_name);
            if (!type) {
                throw analyzer_error("unknown error type '" + type_name + "'");
            }
            std::optional<int> lineno;
            std::optional<int> offset;
            if (auto it = j.find("lineno"); it != j.end() && !it->is_null()) {
                lineno = it->get<int>();
                if (*lineno < 1) {
                    throw analyzer_error("lineno must be >= 1");
                }
            }
            if (auto it = j.find("offset"); it != j.end() && !it->is_null()) {
                offset = it->get<int>();
                if (*offset < 0) {
                    throw analyzer_error("offset must be >= 0");
                }
            }
            r.report     = error_report::failure(*type, lineno, offset, j.value("message", std::string()));
            r.incomplete = j.value("incomplete", false);
        } else if (result == "success") {
            if (j.contains("type") || j.contains("lineno") || j.contains("offset")) {
                throw analyzer_error("successful response carries error fields");
            }
            r.report.message = j.value("message", std::string());
        } else {
            throw analyzer_error("unknown result '" + result + "'");
        }
        if (auto it = j.find("stmt_kinds"); it != j.end()) {
            r.stmt_kinds = it->get<std::vector<std::string>>();
        }
        if (auto it = j.find("stmts"); it != j.end()) {
            for (const auto & s : *it) {
                r.stmts.push_back(stmt_info{s.at("id").get<int>(), s.at("kind").get<std::string>(),
                                            s.at("lineno").get<int>(), s.at("block").get<std::string>()});
            }
        }
        r.stdout_text = j.value("stdout", std::string());
        r.stderr_text = j.value("stderr", std::string());
    } catch (const json::exception & e) {
        throw analyzer_error(std::string("malformed analyzer response: ") + e.what());
    }
    return r;
}

analyze_response wire_analyzer::analyze(const analyze_request & request) {
    const std::string line = to_json(request).dump();
    const std::string reply = handler_(line);
    json parsed;
    try {
        parsed = json::parse(reply);
    } catch (const json::parse_error & e) {
        throw analyzer_error(std::string("analyzer reply is not JSON: ") + e.what());
    }
    return response_from_json(parsed);
}

//
// process_analyzer
//

process_analyzer::process_analyzer(std::vector<std::string> argv, int response_timeout_ms)
    : argv_(std::move(argv)), response_timeout_ms_(response_timeout_ms) {
    if (argv_.empty()) {
        throw std::invalid_argument("process_analyzer: empty command line");
    }
    std::signal(SIGPIPE, SIG_IGN);
    start();
}

process_analyzer::~process_analyzer() {
    stop();
}

std::optional<std::string> process_analyzer::sandbox_from_env() {
    const char * path = std::getenv("ROLLGEN_SANDBOX");
    if (path == nullptr || *path == '\0') {
        return std::nullopt;
    }
    return std::string(path);
}

void process_analyzer::start() {
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
        throw analyzer_error(std::string("pipe: ") + std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) {
        throw analyzer_error(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        std::vector<char *> args;
        for (auto & a : argv_) {
            args.push_back(a.data());
        }
        args.push_back(nullptr);
        execvp(args[0], args.data());
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
    fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
    pid_        = pid;
    to_child_   = in_pipe[1];
    from_child_ = out_pipe[0];
    buffer_.clear();
}

void process_analyzer::stop() {
    if (to_child_ >= 0) {
        close(to_child_);
        to_child_ = -1;
    }
    if (from_child_ >= 0) {
        close(from_child_);
        from_child_ = -1;
    }
    if (pid_ > 0) {
        // closing stdin asks the worker to exit; give it a moment before killing
        for (int i = 0; i < 50; ++i) {
            if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            usleep(2000);
        }
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }
}

std::string process_analyzer::round_trip(const std::string & line, int timeout_ms) {
    std::string payload = line + "\n";
    std::size_t written = 0;
    while (written < payload.size()) {
        const ssize_t n = write(to_child_, payload.data() + written, payload.size() - written);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw analyzer_error(std::string("write to analyzer: ") + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string reply = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return reply;
        }
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
        if (remaining <= 0) {
            throw analyzer_error("analyzer did not answer in time");
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = poll(&pfd, 1, static_cast<int>(remaining));
        if (ready < 0 && errno != EINTR) {
            throw analyzer_error(std::string("poll: ") + std::strerror(errno));
        }
        if (ready <= 0) {
            continue;
        }
        char chunk[4096];
        const ssize_t n = read(from_child_, chunk, sizeof(chunk));
        if (n == 0) {
            throw analyzer_error("analyzer closed its output");
        }
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw analyzer_error(std::string("read from analyzer: ") + std::strerror(errno));
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

analyze_response process_analyzer::analyze(const analyze_request & request) {
    const std::string line = to_json(request).dump();
    const int timeout      = std::max(response_timeout_ms_, request.timeout_ms + 2000);
    std::string reply;
    try {
        reply = round_trip(line, timeout);
    } catch (const analyzer_error &) {
        stop();
        start();
        reply = round_trip(line, timeout);
    }
    json parsed;
    try {
        parsed = json::parse(reply);
    } catch (const json::parse_error & e) {
        throw analyzer_error(std::string("analyzer reply is not JSON: ") + e.what());
    }
    return response_from_json(parsed);
}

} // namespace rollgen
