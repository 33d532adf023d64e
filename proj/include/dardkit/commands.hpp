#pragma once

// Subcommands of the command line tool. Each one reads a resolved RunConfig,
// writes its artifacts under output_dir and records them in manifest.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "dardkit/run_config.hpp"

#ifndef DARDKIT_VERSION
#define DARDKIT_VERSION "0.0.0"
#endif

namespace dardkit {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = DARDKIT_VERSION;

struct StageOutcome {
    std::string name;
    bool executed = false;

    bool operator==(const StageOutcome&) const = default;
};

/// manifest.json of a run directory. Stages recorded by earlier commands are
/// kept; a stage is up to date when its dependency hash matches and every
/// output it listed still exists.
class RunManifest {
public:
    RunManifest(fs::path dir, const RunConfig& rc, std::string command) : dir_(std::move(dir)) {
        const fs::path file = dir_ / "manifest.json";
        if (fs::exists(file)) {
            const auto bytes = detail::read_file(file);
            try {
                const Json old = Json::parse(bytes.begin(), bytes.end());
                if (old.contains("stages") && old["stages"].is_array()) {
                    stages_ = old["stages"];
                }
            } catch (const Json::exception&) {
                // A damaged manifest only costs a recomputation.
            }
        }
        header_ = Json{{"tool", "dardkit"},
                       {"version", kToolVersion},
                       {"command", std::move(command)},
                       {"config_hash", rc.hash()},
                       {"seed", rc.seed},
                       {"config", rc.resolved}};
    }

    const fs::path& dir() const { return dir_; }

    bool up_to_date(const std::string& name, const std::string& hash) const {
        const Json* s = find(name);
        if (!s || s->value("status", "") != "completed" || s->value("hash", "") != hash) {
            return false;
        }
        for (const auto& o : s->at("outputs")) {
            if (!fs::exists(dir_ / o.get<std::string>())) {
                return false;
            }
        }
        return true;
    }

    void record(const std::string& name, const std::string& hash, const std::string& status,
                const std::vector<std::string>& outputs, double wall_time, const std::string& note = "") {
        Json entry{{"name", name}, {"hash", hash}, {"status", status}, {"outputs", outputs},
                   {"wall_time", wall_time}};
        if (!note.empty()) {
            entry["note"] = note;
        }
        if (Json* s = find(name)) {
            *s = entry;
        } else {
            stages_.push_back(entry);
        }
        save();
    }

    Json to_json() const {
        Json j = header_;
        j["stages"] = stages_;
        return j;
    }

    void save() const { detail::write_text_atomic(dir_ / "manifest.json", to_json().dump(2) + "\n"); }

private:
    const Json* find(const std::string& name) const {
        for (const auto& s : stages_) {
            if (s.value("name", "") == name) return &s;
        }
        return nullptr;
    }
    Json* find(const std::string& name) {
        for (auto& s : stages_) {
            if (s.value("name", "") == name) return &s;
        }
        return nullptr;
    }

    fs::path dir_;
    Json header_;
    Json stages_ = Json::array();
};

/// Runs `body` unless the stage is up to date. Errors are recorded in the
/// manifest and rethrown with the stage name, keeping their exit code; files
/// already written stay on disk.
inline StageOutcome run_stage(RunManifest& m, const std::string& name, const std::string& hash,
                              const std::vector<std::string>& outputs, const std::function<void()>& body,
                              std::ostream& log) {
    if (m.up_to_date(name, hash)) {
        log << "[" << name << "] up to date, skipped\n";
        m.save();
        return {name, false};
    }
    log << "[" << name << "] running\n";
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body();
    } catch (const Error& e) {
        m.record(name, hash, "failed", outputs, 0.0, e.what());
        throw Error("stage '" + name + "' failed: " + e.what(), e.exit_code());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.record(name, hash, "completed", outputs, secs);
    log << "[" << name << "] done in " << secs << " s\n";
    return {name, true};
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

namespace detail {

inline std::string hash_of(const Json& j) { return fnv1a_hex(j.dump()); }

inline Json without(Json j, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        j.erase(k);
    }
    return j;
}

/// Inputs that decide the pretrained teacher.
inline std::string teacher_hash(const RunConfig& rc) {
    const Json& d = rc.at("distill");
    Json t;
    for (const char* k : {"alpha_at", "epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
                          "teacher_arch", "teacher_recipe", "teacher_checkpoint", "inner_attack"}) {
        t[k] = d.at(k);
    }
    return hash_of(Json{{"dataset", rc.at("dataset")}, {"seed", rc.seed}, {"teacher", t}});
}

/// `teacher_bytes` is the content hash of the teacher checkpoint (empty
/// without a teacher), so a replaced teacher file retrains the student.
inline std::string student_hash(const RunConfig& rc, const std::string& teacher_bytes) {
    return hash_of(Json{{"teacher", teacher_bytes}, {"arch", rc.at("model").at("arch")}, {"distill", rc.at("distill")}});
}

inline std::string eval_hash(const std::string& upstream, const RunConfig& rc) {
    return hash_of(Json{{"upstream", upstream},
                        {"attack", without(rc.at("attack"), {"dump_tensors"})},
                        {"eval", without(rc.at("eval"), {"workers"})}});
}

inline std::unique_ptr<Classifier> load_model(const std::string& arch, const Dataset& data, const fs::path& ckpt) {
    if (!fs::exists(ckpt)) {
        throw IoError("checkpoint not found: " + ckpt.string());
    }
    auto m = make_model(arch, data.input_shape(), data.num_classes);
    m->set_state(load_checkpoint(ckpt, arch));
    return m;
}

/// Content hash of a checkpoint file, so cached results follow its bytes.
inline std::string file_hash(const fs::path& p) {
    if (!fs::exists(p)) {
        throw IoError("checkpoint not found: " + p.string());
    }
    const auto bytes = read_file(p);
    return fnv1a_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline std::string model_id_for(const fs::path& ckpt) {
    if (fs::exists(metadata_path(ckpt))) {
        const auto meta = load_checkpoint_metadata(ckpt);
        if (auto it = meta.find("strategy"); it != meta.end()) return it->second;
        if (auto it = meta.find("recipe"); it != meta.end()) return "teacher-" + it->second;
    }
    return ckpt.stem().string();
}

inline EvalReport evaluate_config(const Classifier& model, const Dataset& test, const RunConfig& rc,
                                  const std::string& model_id) {
    const Json& e = rc.at("eval");
    return evaluate(model, test, eval_attacks(rc), model_id, rc.seed, e.at("batch_size").get<std::size_t>(),
                    e.at("workers").get<unsigned>());
}

inline std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

/// The teacher of a distillation run: loaded from distill.teacher_checkpoint
/// when given, else pretrained (and cached) under <out>/teacher.
struct ResolvedTeacher {
    std::unique_ptr<Classifier> model;
    std::string content_hash;
};

inline ResolvedTeacher resolve_teacher(RunManifest& m, const RunConfig& rc, const Split& data,
                                       std::vector<StageOutcome>& stages, std::ostream& log) {
    const Json& d = rc.at("distill");
    const std::string arch = d.at("teacher_arch").get<std::string>();
    const std::string given = d.at("teacher_checkpoint").get<std::string>();
    if (!given.empty()) {
        auto t = detail::load_model(arch, data.train, given);
        m.record("teacher", detail::teacher_hash(rc), "provided", {}, 0.0, given);
        stages.push_back({"teacher", false});
        return {std::move(t), detail::file_hash(given)};
    }
    const fs::path ckpt = m.dir() / "teacher" / "teacher.ckpt";
    stages.push_back(run_stage(
        m, "teacher", detail::teacher_hash(rc),
        {"teacher/teacher.ckpt", "teacher/teacher.ckpt.meta.json", "teacher/trainlog.jsonl"},
        [&] {
            DistillConfig cfg = distill_config(rc);
            cfg.seed = teacher_seed(rc.seed);
            const auto r = pretrain_teacher(arch, data.train, parse_recipe(d.at("teacher_recipe").get<std::string>()),
                                            cfg, ckpt);
            detail::write_text_atomic(m.dir() / "teacher" / "trainlog.jsonl", r.log.to_jsonl());
        },
        log));
    return {detail::load_model(arch, data.train, ckpt), detail::file_hash(ckpt)};
}

/// Trains the configured student into `dir` (student.ckpt + trainlog.jsonl).
inline TrainResult train_student(const RunConfig& rc, const Split& data, const Classifier* teacher,
                                 const fs::path& dir) {
    const DistillConfig cfg = distill_config(rc);
    const std::string arch = rc.at("model").at("arch").get<std::string>();
    auto student = make_model(arch, data.train.input_shape(), data.train.num_classes, init_seed(rc.seed));
    TrainResult r = train(*student, needs_teacher(cfg.strategy) ? teacher : nullptr, data.train, cfg);
    save_checkpoint(r.state, dir / "student.ckpt");
    save_checkpoint_metadata(dir / "student.ckpt", {{"role", "student"},
                                                    {"strategy", to_string(cfg.strategy)},
                                                    {"architecture", arch},
                                                    {"dataset", data.train.id},
                                                    {"seed", std::to_string(rc.seed)},
                                                    {"config_hash", rc.hash()}});
    detail::write_text_atomic(dir / "trainlog.jsonl", r.log.to_jsonl());
    return r;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// Trains a model from scratch with the natural or sat strategy.
inline std::vector<StageOutcome> cmd_train(const RunConfig& rc, std::ostream& log = std::cerr) {
    const Strategy s = parse_strategy(rc.at("distill").at("strategy").get<std::string>());
    if (needs_teacher(s)) {
        throw ConfigError("train runs natural or sat only; use distill for strategy '" + to_string(s) + "'");
    }
    RunManifest m(rc.output_dir, rc, "train");
    const Split data = load_split(rc);
    const std::string hash =
        detail::hash_of(Json{{"dataset", rc.at("dataset")}, {"seed", rc.seed}, {"model", rc.at("model").at("arch")},
                             {"distill", rc.at("distill")}});
    return {run_stage(
        m, "train", hash, {"model/student.ckpt", "model/trainlog.jsonl"},
        [&] { train_student(rc, data, nullptr, m.dir() / "model"); }, log)};
}

/// Resolves the teacher, then trains the student.
inline std::vector<StageOutcome> cmd_distill(const RunConfig& rc, std::ostream& log = std::cerr) {
    RunManifest m(rc.output_dir, rc, "distill");
    const DistillConfig cfg = distill_config(rc);
    const Split data = load_split(rc);
    std::vector<StageOutcome> stages;
    ResolvedTeacher teacher;
    if (needs_teacher(cfg.strategy)) {
        teacher = resolve_teacher(m, rc, data, stages, log);
    }
    stages.push_back(run_stage(
        m, "distill", detail::student_hash(rc, teacher.content_hash), {"student/student.ckpt", "student/trainlog.jsonl"},
        [&] { train_student(rc, data, teacher.model.get(), m.dir() / "student"); }, log));
    return stages;
}

/// Evaluates model.checkpoint under the attack matrix into <out>/report.*.
inline EvalReport cmd_eval(const RunConfig& rc, std::ostream& log = std::cerr) {
    const std::string ckpt = rc.at("model").at("checkpoint").get<std::string>();
    if (ckpt.empty()) {
        throw ConfigError("eval needs model.checkpoint");
    }
    RunManifest m(rc.output_dir, rc, "eval");
    const Split data = load_split(rc);
    EvalReport report;
    const bool ran = run_stage(
        m, "eval", detail::eval_hash(detail::file_hash(ckpt), rc), {"report.json"},
        [&] {
            auto model = detail::load_model(rc.at("model").at("arch").get<std::string>(), data.test, ckpt);
            report = detail::evaluate_config(*model, data.test, rc, detail::model_id_for(ckpt));
            auto formats = report_formats(rc);
            formats.insert(ReportFormat::json);
            emit_report(report, m.dir(), formats);
        },
        log).executed;
    if (!ran) {
        const auto bytes = detail::read_file(m.dir() / "report.json");
        report = parse_report_json(std::string(bytes.begin(), bytes.end()));
    }
    return report;
}

/// Attacks the test split with the `attack` section and summarises the result.
inline Json cmd_attack(const RunConfig& rc, std::ostream& log = std::cerr) {
    const std::string ckpt = rc.at("model").at("checkpoint").get<std::string>();
    if (ckpt.empty()) {
        throw ConfigError("attack needs model.checkpoint");
    }
    RunManifest m(rc.output_dir, rc, "attack");
    const Split data = load_split(rc);
    Json summary;
    run_stage(
        m, "attack", detail::eval_hash(detail::file_hash(ckpt), rc), {"attack/summary.json"},
        [&] {
            auto model = detail::load_model(rc.at("model").at("arch").get<std::string>(), data.test, ckpt);
            const AttackConfig cfg = attack_from_section(rc.at("attack"));
            const auto bs = sequential_batches(data.test, rc.at("eval").at("batch_size").get<std::size_t>());
            std::size_t n = 0, clean_wrong = 0, adv_wrong = 0;
            double linf_sum = 0.0, linf_max = 0.0;
            Matrix all_adv(static_cast<Eigen::Index>(data.test.size()), data.test.records.inputs.cols());
            for (std::size_t b = 0; b < bs.size(); ++b) {
                const AdvBatch adv = run_attack(*model, bs[b], cfg, mix_seed(rc.seed, b));
                const auto clean_pred = predictions(model->forward(bs[b].inputs));
                const auto adv_pred = predictions(model->forward(adv.adversarials));
                const Matrix delta = adv.perturbation().cwiseAbs();
                for (std::size_t i = 0; i < bs[b].size(); ++i) {
                    const auto row = static_cast<Eigen::Index>(i);
                    clean_wrong += clean_pred[i] != bs[b].labels[i] ? 1 : 0;
                    adv_wrong += adv_pred[i] != bs[b].labels[i] ? 1 : 0;
                    const double l = delta.row(row).maxCoeff();
                    linf_sum += l;
                    linf_max = std::max(linf_max, l);
                    all_adv.row(static_cast<Eigen::Index>(n + i)) = adv.adversarials.row(row);
                }
                n += bs[b].size();
            }
            const double nn = static_cast<double>(n);
            summary = Json{{"attack", attack_name(cfg)},
                           {"config_hash", attack_hash(cfg)},
                           {"model_id", detail::model_id_for(ckpt)},
                           {"dataset_id", data.test.id},
                           {"seed", rc.seed},
                           {"n", n},
                           {"epsilon", cfg.epsilon},
                           {"clean_error_rate", round_half_up(100.0 * static_cast<double>(clean_wrong) / nn)},
                           {"success_rate", round_half_up(100.0 * static_cast<double>(adv_wrong) / nn)},
                           {"mean_linf", linf_sum / nn},
                           {"max_linf", linf_max}};
            detail::write_text_atomic(m.dir() / "attack" / "summary.json", summary.dump(2) + "\n");
            if (rc.at("attack").at("dump_tensors").get<bool>()) {
                save_tensor(data.test.records.inputs, m.dir() / "attack" / "originals.bin");
                save_tensor(all_adv, m.dir() / "attack" / "adversarials.bin");
            }
        },
        log);
    if (summary.is_null()) {
        const auto bytes = detail::read_file(m.dir() / "attack" / "summary.json");
        summary = Json::parse(bytes.begin(), bytes.end());
    }
    return summary;
}

/// Collects every report.json under output_dir into comparison.md.
inline std::string cmd_report(const RunConfig& rc, std::ostream& log = std::cerr) {
    std::vector<fs::path> files;
    if (fs::is_directory(rc.output_dir)) {
        for (const auto& e : fs::recursive_directory_iterator(rc.output_dir)) {
            if (e.is_regular_file() && e.path().filename() == "report.json") {
                files.push_back(e.path());
            }
        }
    }
    if (files.empty()) {
        throw DataError("no report.json found under '" + rc.output_dir.string() + "'");
    }
    std::sort(files.begin(), files.end());
    std::vector<EvalReport> reports;
    for (const auto& f : files) {
        const auto bytes = detail::read_file(f);
        reports.push_back(parse_report_json(std::string(bytes.begin(), bytes.end())));
    }
    const std::string md = comparison_markdown(reports);
    detail::write_text_atomic(rc.output_dir / "comparison.md", md);
    log << "[report] " << reports.size() << " reports -> " << (rc.output_dir / "comparison.md").string() << "\n";
    return md;
}

inline const std::vector<Strategy>& ablation_strategies() {
    static const std::vector<Strategy> s{Strategy::dard, Strategy::pgdard, Strategy::onlyadv_ard};
    return s;
}

/// Trains dard, pgdard and onlyadv_ard against one teacher under otherwise
/// identical configs and compares them.
inline std::vector<StageOutcome> cmd_ablate(const RunConfig& rc, std::ostream& log = std::cerr) {
    RunManifest m(rc.output_dir, rc, "ablate");
    const Split data = load_split(rc);
    std::vector<StageOutcome> stages;
    auto teacher = resolve_teacher(m, rc, data, stages, log);

    std::vector<EvalReport> reports;
    std::vector<std::vector<double>> losses;
    Json runs = Json::array();
    for (Strategy s : ablation_strategies()) {
        Json variant = rc.resolved;
        variant["distill"]["strategy"] = to_string(s);
        const RunConfig vrc = make_run_config(variant);
        const std::string name = "ablate/" + to_string(s);
        const fs::path dir = m.dir() / "ablate" / to_string(s);
        stages.push_back(run_stage(
            m, name, detail::eval_hash(detail::student_hash(vrc, teacher.content_hash), vrc),
            {name + "/student.ckpt", name + "/trainlog.jsonl", name + "/report.json"},
            [&] {
                train_student(vrc, data, teacher.model.get(), dir);
                auto student = detail::load_model(vrc.at("model").at("arch").get<std::string>(), data.test,
                                                  dir / "student.ckpt");
                emit_report(detail::evaluate_config(*student, data.test, vrc, to_string(s)), dir, report_formats(vrc));
            },
            log));
        const auto rbytes = detail::read_file(dir / "report.json");
        reports.push_back(parse_report_json(std::string(rbytes.begin(), rbytes.end())));
        std::vector<double> curve;
        const auto lbytes = detail::read_file(dir / "trainlog.jsonl");
        std::stringstream lines(std::string(lbytes.begin(), lbytes.end()));
        for (std::string line; std::getline(lines, line);) {
            if (!line.empty()) curve.push_back(Json::parse(line).at("train_loss").get<double>());
        }
        losses.push_back(curve);
        Json rest = variant;
        rest["distill"].erase("strategy");
        runs.push_back(Json{{"strategy", to_string(s)},
                            {"config_hash", vrc.hash()},
                            {"shared_hash", config_hash(rest)}});
    }

    std::string csv = "epoch";
    for (Strategy s : ablation_strategies()) csv += "," + to_string(s);
    csv += "\n";
    const std::size_t epochs = losses.front().size();
    for (std::size_t e = 0; e < epochs; ++e) {
        csv += std::to_string(e + 1);
        for (const auto& c : losses) csv += "," + (e < c.size() ? detail::fmt_real(c[e]) : std::string());
        csv += "\n";
    }
    const fs::path out = m.dir() / "ablate";
    detail::write_text_atomic(out / "loss.csv", csv);
    detail::write_text_atomic(out / "comparison.md", comparison_markdown(reports));
    detail::write_text_atomic(out / "runs.json", runs.dump(2) + "\n");
    m.save();
    return stages;
}

/// teacher -> distill -> eval of both models, each stage cached by the hash of
/// the inputs it depends on.
inline std::vector<StageOutcome> cmd_pipeline(const RunConfig& rc, std::ostream& log = std::cerr) {
    RunManifest m(rc.output_dir, rc, "pipeline");
    const DistillConfig cfg = distill_config(rc);
    if (!needs_teacher(cfg.strategy)) {
        throw ConfigError("pipeline distils a student; strategy '" + to_string(cfg.strategy) + "' takes no teacher");
    }
    const Split data = load_split(rc);
    std::vector<StageOutcome> stages;
    auto teacher = resolve_teacher(m, rc, data, stages, log);
    stages.push_back(run_stage(
        m, "distill", detail::student_hash(rc, teacher.content_hash), {"student/student.ckpt", "student/trainlog.jsonl"},
        [&] { train_student(rc, data, teacher.model.get(), m.dir() / "student"); }, log));
    // Eval depends on the bytes of both models, not on how they were made.
    const std::string models = teacher.content_hash + detail::file_hash(m.dir() / "student" / "student.ckpt");
    stages.push_back(run_stage(
        m, "eval", detail::eval_hash(models, rc),
        {"eval/teacher/report.json", "eval/student/report.json", "eval/comparison.md"},
        [&] {
            const auto formats = report_formats(rc);
            auto student = detail::load_model(rc.at("model").at("arch").get<std::string>(), data.test,
                                              m.dir() / "student" / "student.ckpt");
            const auto t = detail::evaluate_config(
                *teacher.model, data.test, rc, "teacher-" + rc.at("distill").at("teacher_recipe").get<std::string>());
            const auto s = detail::evaluate_config(*student, data.test, rc, to_string(cfg.strategy));
            emit_report(t, m.dir() / "eval" / "teacher", formats);
            emit_report(s, m.dir() / "eval" / "student", formats);
            detail::write_text_atomic(m.dir() / "eval" / "comparison.md", comparison_markdown({t, s}));
        },
        log));
    return stages;
}

}  // namespace dardkit
