#include "rollgen/harness.hpp"
#include "rollgen/orchestrator.hpp"
#include "rollgen/rollback.hpp"
#include "rollgen/stub_sandbox.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using json   = nlohmann::json;
using namespace rollgen;

namespace {

json to_json_value(const py::handle & obj) {
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json_value(const json & j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

token_distribution dense(const std::vector<double> & probs) { return token_distribution::from_dense(probs); }

py::dict report_dict(const error_report & r) {
    py::dict d;
    d["result"] = r.failed() ? "failure" : "success";
    if (r.type) {
        d["type"] = std::string(to_string(*r.type));
    }
    if (r.lineno) {
        d["lineno"] = *r.lineno;
    }
    if (r.offset) {
        d["offset"] = *r.offset;
    }
    if (!r.message.empty()) {
        d["message"] = r.message;
    }
    return d;
}

error_report report_from(const py::dict & d) {
    const json j = to_json_value(d);
    if (j.value("result", "failure") == "success") {
        return error_report::ok();
    }
    const auto type = parse_error_type(j.at("type").get<std::string>());
    if (!type) {
        throw std::invalid_argument("unknown error type " + j.at("type").dump());
    }
    std::optional<int> lineno, offset;
    if (j.contains("lineno")) {
        lineno = j.at("lineno").get<int>();
    }
    if (j.contains("offset")) {
        offset = j.at("offset").get<int>();
    }
    return error_report::failure(*type, lineno, offset, j.value("message", ""));
}

std::vector<task_record> records_from(const std::vector<std::vector<std::vector<bool>>> & matrix,
                                      const std::vector<std::vector<bool>> & compilable) {
    std::vector<task_record> out;
    for (std::size_t t = 0; t < matrix.size(); ++t) {
        task_record rec{"task-" + std::to_string(t), {}};
        for (std::size_t s = 0; s < matrix[t].size(); ++s) {
            sample_record smp;
            smp.test_results = matrix[t][s];
            smp.compilable   = t < compilable.size() && s < compilable[t].size() ? compilable[t][s] : true;
            rec.samples.push_back(std::move(smp));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

session_config config_from(const py::dict & d) {
    session_config c;
    const json j = to_json_value(d);
    for (const auto & [key, value] : j.items()) {
        if (key == "lambda") c.lambda = value.get<double>();
        else if (key == "budget_multiplier") c.budget_multiplier = value.get<int>();
        else if (key == "max_generation_length") c.max_generation_length = value.get<int>();
        else if (key == "policy") c.policy = sampling_policy::parse(value.get<std::string>());
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "repeat_threshold") c.repeat_threshold = value.get<int>();
        else if (key == "timeout_ms") c.timeout_ms = value.get<int>();
        else if (key == "memory_limit_mb") c.memory_limit_mb = value.get<int>();
        else if (key == "exponent_offset") c.exponent_offset = value.get<int>();
        else if (key == "constraint") c.constraint = parse_constraint_mode(value.get<std::string>());
        else if (key == "rollback") c.rollback = parse_rollback_variant(value.get<std::string>());
        else if (key == "run_with_input") c.run_with_input = value.get<bool>();
        else throw std::invalid_argument("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

// Analyzer chosen from Python: a stub sandbox object or a worker command line.
std::unique_ptr<analyzer> analyzer_from(const py::object & sandbox) {
    if (py::isinstance<stub_sandbox>(sandbox)) {
        return std::make_unique<wire_analyzer>(make_stub_analyzer(sandbox.cast<const stub_sandbox &>()));
    }
    return std::make_unique<process_analyzer>(sandbox.cast<std::vector<std::string>>());
}

analyzer_factory factory_from(const py::object & sandbox) {
    if (py::isinstance<stub_sandbox>(sandbox)) {
        auto stub = std::make_shared<stub_sandbox>(sandbox.cast<const stub_sandbox &>());
        return [stub] { return std::make_unique<wire_analyzer>(make_stub_analyzer(*stub)); };
    }
    auto argv = sandbox.cast<std::vector<std::string>>();
    return [argv] { return std::make_unique<process_analyzer>(argv); };
}

py::dict result_dict(const generation_result & r) {
    py::dict d;
    d["final_code"]      = r.final_code;
    d["status"]          = std::string(to_string(r.status));
    d["tokens_consumed"] = r.tokens_consumed;
    d["rollback_count"]  = r.rollback_count;
    py::list reports;
    for (const auto & rep : r.reports) {
        reports.append(report_dict(rep));
    }
    d["reports"]   = reports;
    d["entropies"] = r.entropies;
    if (!r.message.empty()) {
        d["message"] = r.message;
    }
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Incremental code generation with rollback and constrained regeneration";

    py::register_exception<infrastructure_error>(m, "InfrastructureError", PyExc_RuntimeError);

    m.def("entropy", [](const std::vector<double> & probs) { return entropy(dense(probs)); }, py::arg("probs"));
    m.def(
        "constrain",
        [](const std::vector<double> & probs, const std::map<token_id, double> & penalties) {
            penalty_map pm(penalties.begin(), penalties.end());
            return constrain(dense(probs), pm).dense();
        },
        py::arg("probs"), py::arg("penalties"));
    m.def(
        "policy_distribution",
        [](const std::vector<double> & probs, const std::string & policy) {
            return policy_distribution(dense(probs), sampling_policy::parse(policy)).dense();
        },
        py::arg("probs"), py::arg("policy"));
    m.def(
        "sample",
        [](const std::vector<double> & probs, const std::string & policy, std::uint64_t seed, std::size_t n) {
            token_sampler sampler(sampling_policy::parse(policy), seed);
            const auto dist = dense(probs);
            std::vector<token_id> out(n);
            for (auto & t : out) {
                t = sampler.sample(dist);
            }
            return out;
        },
        py::arg("probs"), py::arg("policy") = "greedy", py::arg("seed") = 0, py::arg("n") = 1);

    py::class_<generation_tree>(m, "GenerationTree")
        .def(py::init<>())
        .def(
            "append",
            [](generation_tree & t, token_id token, const std::string & text, double h) {
                return t.append_token(token, text, h).value;
            },
            py::arg("token"), py::arg("text"), py::arg("entropy") = 0.0)
        .def("mark_statement", &generation_tree::mark_statement)
        .def(
            "rollback_to",
            [](generation_tree & t, int lineno, int offset) { return t.rollback_to({lineno, offset}).value; },
            py::arg("lineno"), py::arg("offset"))
        .def(
            "apply_penalties",
            [](generation_tree & t, std::uint32_t r_node, double lambda, int exponent_offset) {
                t.apply_penalties(node_id{r_node}, lambda, exponent_offset);
            },
            py::arg("r_node"), py::arg("lambda_"), py::arg("exponent_offset") = 0)
        .def("block_abandoned", [](generation_tree & t, std::uint32_t r_node) { t.block_abandoned(node_id{r_node}); })
        .def("locate", [](const generation_tree & t, int lineno, int offset) { return t.locate(lineno, offset).value; })
        .def("child_penalties",
             [](const generation_tree & t, std::uint32_t id) {
                 const auto pm = t.child_penalty_vector(node_id{id});
                 return std::map<token_id, double>(pm.begin(), pm.end());
             })
        .def("node",
             [](const generation_tree & t, std::uint32_t id) {
                 const auto & n = t.node(node_id{id});
                 py::dict d;
                 d["token"]      = n.token;
                 d["text"]       = n.text;
                 d["step"]       = n.step;
                 d["entropy"]    = n.entropy;
                 d["penalty"]    = n.penalty;
                 d["error_flag"] = n.error_flag;
                 d["parent"]     = n.parent ? py::cast(n.parent->value) : py::none();
                 return d;
             })
        .def("token_index_to_lineno", &generation_tree::token_index_to_lineno)
        .def("entropy_trace", &generation_tree::entropy_trace)
        .def("dump", &generation_tree::dump)
        .def_property_readonly("root", [](const generation_tree & t) { return t.root().value; })
        .def_property_readonly("current", [](const generation_tree & t) { return t.current().value; })
        .def_property_readonly("active_text", &generation_tree::active_text)
        .def_property_readonly("active_path",
                               [](const generation_tree & t) {
                                   std::vector<std::uint32_t> out;
                                   for (const auto id : t.active_path()) {
                                       out.push_back(id.value);
                                   }
                                   return out;
                               })
        .def_property_readonly("node_count", &generation_tree::node_count)
        .def_property_readonly("total_tokens_emitted", &generation_tree::total_tokens_emitted)
        .def_property_readonly("rollback_count", &generation_tree::rollback_count);

    m.def(
        "choose_rollback",
        [](const std::vector<py::dict> & reports, const std::vector<double> & trace, const generation_tree & tree,
           const std::string & variant) {
            std::vector<error_report> rs;
            for (const auto & d : reports) {
                rs.push_back(report_from(d));
            }
            const auto r = choose_rollback(rs, trace, tree, parse_rollback_variant(variant));
            return std::make_pair(r.lineno, r.offset);
        },
        py::arg("reports"), py::arg("trace"), py::arg("tree"), py::arg("variant") = "strategic");

    m.def(
        "outline",
        [](const std::string & code) {
            const auto o = outline_python(code);
            py::dict d;
            if (o.issue) {
                py::dict issue;
                issue["message"]    = o.issue->message;
                issue["lineno"]     = o.issue->lineno;
                issue["offset"]     = o.issue->offset;
                issue["incomplete"] = o.issue->incomplete;
                d["issue"]          = issue;
            } else {
                d["issue"] = py::none();
            }
            py::list stmts;
            for (const auto & s : o.stmts) {
                stmts.append(py::make_tuple(s.kind, s.lineno, s.block));
            }
            d["stmts"]           = stmts;
            d["top_level_kinds"] = o.top_level_kinds;
            return d;
        },
        py::arg("code"));

    py::class_<stub_sandbox>(m, "StubSandbox")
        .def(py::init([](const py::object & rules) {
                 return rules.is_none() ? stub_sandbox() : stub_sandbox::from_json(to_json_value(rules));
             }),
             py::arg("rules") = py::none())
        .def_static("load", &stub_sandbox::load)
        .def("handle", [](const stub_sandbox & s, const py::dict & request) {
            return from_json_value(json::parse(s.handle_line(to_json_value(request).dump())));
        });

    py::class_<scripted_provider>(m, "ScriptedProvider")
        .def(py::init([](const py::dict & spec) { return scripted_provider::from_json(to_json_value(spec)); }))
        .def_static("load", &scripted_provider::load)
        .def("token_text", &scripted_provider::token_text)
        .def_property_readonly("eos", &scripted_provider::eos_token);

    m.def(
        "generate",
        [](const py::dict & task, scripted_provider & provider, const py::object & sandbox, const py::dict & config) {
            const generation_task t = task_spec::from_json(to_json_value(task)).redacted();
            const session_config c  = config_from(config);
            auto backend            = analyzer_from(sandbox);
            generation_result r;
            {
                py::gil_scoped_release release;
                r = generate(t, provider, *backend, c);
            }
            return result_dict(r);
        },
        py::arg("task"), py::arg("provider"), py::arg("sandbox"), py::arg("config") = py::dict());

    m.def(
        "run_benchmark",
        [](const std::vector<py::dict> & tasks, scripted_provider & provider, const py::object & sandbox,
           const std::string & mode, const py::dict & config, int samples, int trials, int parallelism) {
            std::vector<task_spec> specs;
            for (const auto & t : tasks) {
                specs.push_back(task_spec::from_json(to_json_value(t)));
            }
            benchmark_options o;
            o.mode        = parse_run_mode(mode);
            o.config      = config_from(config);
            o.samples     = samples;
            o.trials      = trials;
            o.parallelism = parallelism;
            const auto factory = factory_from(sandbox);
            json out;
            {
                py::gil_scoped_release release;
                out = to_json(run_benchmark(specs, provider, factory, o));
            }
            return from_json_value(out);
        },
        py::arg("tasks"), py::arg("provider"), py::arg("sandbox"), py::arg("mode") = "rocode",
        py::arg("config") = py::dict(), py::arg("samples") = 1, py::arg("trials") = 1, py::arg("parallelism") = 1);

    m.def("load_tasks", [](const std::string & path) {
        py::list out;
        for (const auto & t : load_tasks(path)) {
            out.append(from_json_value(t.to_json()));
        }
        return out;
    });

    m.def(
        "pass_rate",
        [](const std::vector<std::vector<std::vector<bool>>> & results) {
            return pass_rate(records_from(results, {}));
        },
        py::arg("results"));
    m.def(
        "avg_pass_ratio",
        [](const std::vector<std::vector<std::vector<bool>>> & results) {
            return avg_pass_ratio(records_from(results, {}));
        },
        py::arg("results"));
    m.def(
        "ccp",
        [](const std::vector<std::vector<bool>> & compilable) {
            std::vector<std::vector<std::vector<bool>>> shape;
            for (const auto & row : compilable) {
                shape.emplace_back(row.size());
            }
            return ccp(records_from(shape, compilable));
        },
        py::arg("compilable"));
}
