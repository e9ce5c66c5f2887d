#include "pxp/analyzer.hpp"
#include "pxp/error.hpp"
#include "pxp/orchestrator.hpp"
#include "pxp/protocol.hpp"
#include "pxp/run_config.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

py::object to_python(const nlohmann::ordered_json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

pxp::Tag tag_from(const std::string& name) {
    auto tag = pxp::parse_tag(name);
    if (!tag) throw pxp::Error(pxp::ErrorCode::validation, "unknown tag '" + name + "'", {"tag"});
    return *tag;
}

std::vector<pxp::Tag> tags_from(const std::vector<std::string>& names) {
    std::vector<pxp::Tag> out;
    for (const auto& n : names) out.push_back(tag_from(n));
    return out;
}

py::dict verdict_dict(const pxp::AgentVerdict& v) {
    return py::dict("one_way"_a = v.one_way, "strong"_a = v.strong, "ultra_strong"_a = v.ultra);
}

py::dict outcome_dict(const pxp::RunResult& r) {
    py::list sessions;
    for (const auto& s : r.sessions) {
        sessions.append(py::dict("session_id"_a = s.session_id,
                                 "status"_a = std::string(pxp::session_status_name(s.status)), "reason"_a = s.reason,
                                 "messages"_a = s.messages));
    }
    return py::dict("run_id"_a = r.handle.run_id, "dir"_a = r.handle.dir, "sessions"_a = sessions,
                    "report"_a = to_python(pxp::report_to_json(pxp::aggregate_report({r.summary}))));
}

pxp::RunConfig config_with(const std::filesystem::path& path, const std::optional<std::filesystem::path>& output,
                           const std::optional<std::uint64_t>& seed,
                           const std::optional<std::filesystem::path>& mock_llm) {
    pxp::RunConfig cfg = pxp::load_run_config(path);
    if (output) {
        cfg.output_dir = std::filesystem::absolute(*output);
        cfg.document["output_dir"] = cfg.output_dir.string();
    }
    if (seed) {
        cfg.seed = *seed;
        cfg.document["seed"] = *seed;
    }
    if (mock_llm) {
        cfg.mock_llm = std::filesystem::absolute(*mock_llm);
        cfg.document["mock_llm"] = cfg.mock_llm->string();
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_pxp, m) {
    m.doc() = "Two-way intelligibility protocol engine.";

    static py::handle error_type = py::exception<pxp::Error>(m, "PxpError").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const pxp::Error& e) {
            py::object instance = error_type(e.what());
            instance.attr("code") = std::string(pxp::error_code_name(e.code()));
            instance.attr("fields") = e.fields();
            PyErr_SetObject(error_type.ptr(), instance.ptr());
        }
    });

    m.def("tags", [] {
        std::vector<std::string> out;
        for (auto t : pxp::all_tags) out.emplace_back(pxp::tag_name(t));
        return out;
    });

    m.def(
        "decide_tag",
        [](bool match, bool agree, bool changed, int j, int k) {
            return std::string(pxp::tag_name(pxp::decide_tag({match, agree, changed}, j, k)));
        },
        "match"_a, "agree"_a, "changed"_a, "j"_a, "k"_a);

    m.def(
        "session_stopped",
        [](const std::string& machine, const std::string& human, const std::string& last_sender) {
            if (last_sender != pxp::machine_id && last_sender != pxp::human_id) {
                throw pxp::Error(pxp::ErrorCode::validation, "last_sender must be 'm' or 'h'", {"last_sender"});
            }
            return pxp::session_stopped(tag_from(machine), tag_from(human),
                                        last_sender == pxp::machine_id ? pxp::Role::machine : pxp::Role::human);
        },
        "machine"_a, "human"_a, "last_sender"_a);

    m.def(
        "classify",
        [](const std::vector<std::string>& machine_to_human, const std::vector<std::string>& human_to_machine) {
            const auto v = pxp::classify({tags_from(machine_to_human), tags_from(human_to_machine)});
            return py::dict("machine"_a = verdict_dict(v.machine), "human"_a = verdict_dict(v.human),
                            "two_way"_a = v.two_way);
        },
        "machine_to_human"_a, "human_to_machine"_a);

    m.def("normalize_text", &pxp::normalize_text, "text"_a);
    m.def("exact_match", &pxp::exact_match, "a"_a, "b"_a);
    m.def("jaccard", &pxp::jaccard, "a"_a, "b"_a);

    m.def(
        "validate_config",
        [](const std::filesystem::path& path) {
            return to_python(nlohmann::ordered_json(pxp::load_run_config(path).document));
        },
        "path"_a);

    m.def(
        "run",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> output,
           std::optional<std::uint64_t> seed, std::optional<std::filesystem::path> mock_llm) {
            const auto cfg = config_with(config, output, seed, mock_llm);
            pxp::RepeatedResult result;
            {
                py::gil_scoped_release release;
                result = pxp::run_repeated(cfg);
            }
            py::list runs;
            for (const auto& r : result.runs) runs.append(outcome_dict(r));
            return py::dict("output_dir"_a = cfg.output_dir, "runs"_a = runs, "failures"_a = result.failures,
                            "report"_a = to_python(pxp::report_to_json(result.report)),
                            "table"_a = pxp::render_table({{cfg.name, result.report}}));
        },
        "config"_a, "output"_a = py::none(), "seed"_a = py::none(), "mock_llm"_a = py::none());

    m.def(
        "resume",
        [](const std::filesystem::path& run_dir) {
            pxp::RunResult result;
            {
                py::gil_scoped_release release;
                result = pxp::resume(run_dir);
            }
            return outcome_dict(result);
        },
        "run_dir"_a);

    m.def(
        "analyze",
        [](const std::vector<std::filesystem::path>& paths, int min_length) {
            std::vector<std::string> warnings;
            const auto report = pxp::analyze_paths(paths, min_length, &warnings);
            py::dict out = to_python(pxp::report_to_json(report));
            out["warnings"] = warnings;
            out["table"] = pxp::render_table({{"analysis", report}});
            return out;
        },
        "paths"_a, "min_length"_a = 0);

    m.def(
        "replay",
        [](const std::filesystem::path& transcript, const std::filesystem::path& config,
           std::optional<std::filesystem::path> mock_llm) {
            const auto cfg = config_with(config, std::nullopt, std::nullopt, mock_llm);
            py::list out;
            for (const auto& t : pxp::load_transcript_file(transcript)) {
                const auto r = pxp::replay_transcript(t, cfg);
                py::list divergences;
                for (const auto& d : r.divergences) {
                    divergences.append(
                        py::dict("j"_a = d.msg_number, "recorded"_a = d.recorded, "computed"_a = d.computed));
                }
                out.append(py::dict("session_id"_a = r.session_id, "messages"_a = r.messages,
                                    "divergences"_a = divergences));
            }
            return out;
        },
        "transcript"_a, "config"_a, "mock_llm"_a = py::none());
}
