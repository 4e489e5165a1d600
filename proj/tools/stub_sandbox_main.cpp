// Analyzer worker speaking the line-delimited JSON protocol on stdin/stdout,
// backed by the stub sandbox (lexical syntax check plus scripted faults).

#include "rollgen/stub_sandbox.hpp"

#include <iostream>
#include <string>

#include "CLI11.hpp"

int main(int argc, char ** argv) {
    CLI::App app{"rollgen stub analyzer worker"};
    std::string rules;
    app.add_option("--rules", rules, "fault rules JSON file")->check(CLI::ExistingFile);
    CLI11_PARSE(app, argc, argv);

    try {
        const rollgen::stub_sandbox stub = rules.empty() ? rollgen::stub_sandbox() : rollgen::stub_sandbox::load(rules);
        std::ios::sync_with_stdio(false);
        std::string line;
        while (std::getline(std::cin, line)) {
            if (line.empty()) {
                continue;
            }
            std::cout << stub.handle_line(line) << '\n' << std::flush;
        }
    } catch (const std::exception & e) {
        std::cerr << "rollgen-stub-sandbox: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
