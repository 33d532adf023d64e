#pragma once

// Run configuration for the command line tool: a nested YAML document checked
// against a strict schema, with dotted-path overrides and a content hash.

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dardkit/distill.hpp"
#include "dardkit/eval.hpp"

namespace dardkit {

using Json = nlohmann::json;

/// Every key the tool accepts, with its default. A null default marks an
/// optional boolean that falls back to a per-kind rule.
inline Json default_config() {
    const double eps = 8.0 / 255.0;
    const double step = 2.0 / 255.0;
    return Json{
        {"seed", 0},
        {"output_dir", "runs/default"},
        {"dataset",
         {{"kind", "cifar10"},
          {"root", ""},
          {"num_classes", 10},
          {"dim", 32},
          {"n_train_per_class", 200},
          {"n_test_per_class", 100},
          {"spread", 0.3},
          {"signature", 0.04},
          {"signature_noise", 0.1}}},
        {"model", {{"arch", "mlp-2x64"}, {"checkpoint", ""}}},
        {"attack",
         {{"kind", "pgd"},
          {"epsilon", eps},
          {"step_size", step},
          {"iterations", 20},
          {"random_start", nullptr},
          {"target_rule", "least_likely"},
          {"target_class", 0},
          {"dpgd_loss", "dice"},
          {"dice_smooth", 1.0},
          {"dump_tensors", false}}},
        {"distill",
         {{"strategy", "dard"},
          {"alpha_kd", 0.9},
          {"tau", 1.0},
          {"mix_beta", 0.5},
          {"alpha_at", 0.5},
          {"kl_orientation", "teacher_student"},
          {"epochs", 30},
          {"batch_size", 128},
          {"learning_rate", 0.1},
          {"momentum", 0.9},
          {"weight_decay", 5e-4},
          {"teacher_arch", "mlp-2x128"},
          {"teacher_recipe", "sat"},
          {"teacher_checkpoint", ""},
          {"inner_attack",
           {{"kind", "dpgd"},
            {"epsilon", eps},
            {"step_size", step},
            {"iterations", 20},
            {"random_start", nullptr},
            {"dpgd_loss", "dice"},
            {"dice_smooth", 1.0}}}}},
        {"eval",
         {{"attacks", {"fgsm", "pgd", "tpgd", "bim", "dpgd"}},
          {"batch_size", 256},
          {"workers", 1},
          {"formats", {"json", "csv", "md"}}}},
    };
}

namespace detail {

inline bool parse_fraction(const std::string& s, double& out) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) {
        return false;
    }
    double num = 0.0, den = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto r1 = std::from_chars(b, b + slash, num);
    auto r2 = std::from_chars(b + slash + 1, e, den);
    if (r1.ec != std::errc{} || r1.ptr != b + slash || r2.ec != std::errc{} || r2.ptr != e || den == 0.0) {
        return false;
    }
    out = num / den;
    return true;
}

/// Plain YAML scalar to JSON: quoted text stays a string, otherwise
/// null/bool/integer/real are recognised in that order.
inline Json yaml_scalar(const YAML::Node& n) {
    const std::string s = n.Scalar();
    if (n.Tag() == "!") {
        return s;
    }
    if (s.empty() || s == "~" || s == "null") {
        return nullptr;
    }
    if (s == "true") return true;
    if (s == "false") return false;
    const char* b = s.data();
    const char* e = b + s.size();
    long long i = 0;
    if (auto r = std::from_chars(b, e, i); r.ec == std::errc{} && r.ptr == e) {
        return i;
    }
    double d = 0.0;
    if (auto r = std::from_chars(b, e, d); r.ec == std::errc{} && r.ptr == e) {
        return d;
    }
    return s;
}

inline Json yaml_to_json(const YAML::Node& n) {
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return nullptr;
        case YAML::NodeType::Scalar:
            return yaml_scalar(n);
        case YAML::NodeType::Sequence: {
            Json a = Json::array();
            for (const auto& item : n) {
                a.push_back(yaml_to_json(item));
            }
            return a;
        }
        case YAML::NodeType::Map: {
            Json o = Json::object();
            for (const auto& kv : n) {
                const std::string key = kv.first.Scalar();
                if (o.contains(key)) {
                    throw ConfigError("duplicate config key '" + key + "'");
                }
                o[key] = yaml_to_json(kv.second);
            }
            return o;
        }
    }
    return nullptr;
}

inline std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

inline std::string type_name(const Json& j) {
    if (j.is_null()) return "null";
    if (j.is_boolean()) return "boolean";
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_array()) return "list";
    return "mapping";
}

/// Checks `value` against the schema entry `schema` and returns it in
/// canonical form (reals as doubles, "8/255" fractions evaluated).
inline Json conform(const Json& schema, const Json& value, const std::string& path) {
    auto mismatch = [&](const std::string& want) {
        return ConfigError("config key '" + path + "' expects " + want + ", got " + type_name(value));
    };
    if (schema.is_object()) {
        if (!value.is_object()) {
            throw mismatch("a mapping");
        }
        Json out = schema;
        for (const auto& [k, v] : value.items()) {
            if (!schema.contains(k)) {
                throw ConfigError("unknown config key '" + join_path(path, k) + "'");
            }
            out[k] = conform(schema[k], v, join_path(path, k));
        }
        return out;
    }
    if (schema.is_null()) {
        if (!value.is_null() && !value.is_boolean()) {
            throw mismatch("a boolean or null");
        }
        return value;
    }
    if (schema.is_boolean()) {
        if (!value.is_boolean()) throw mismatch("a boolean");
        return value;
    }
    if (schema.is_number_integer()) {
        if (!value.is_number_integer()) throw mismatch("an integer");
        if (value.get<long long>() < 0) {
            throw ConfigError("config key '" + path + "' must be nonnegative");
        }
        return value;
    }
    if (schema.is_number()) {
        if (value.is_number()) return value.get<double>();
        double d = 0.0;
        if (value.is_string() && parse_fraction(value.get<std::string>(), d)) return d;
        throw mismatch("a number");
    }
    if (schema.is_string()) {
        if (!value.is_string()) throw mismatch("a string");
        return value;
    }
    if (schema.is_array()) {
        if (!value.is_array()) throw mismatch("a list");
        for (const auto& item : value) {
            if (!item.is_string()) throw mismatch("a list of strings");
        }
        return value;
    }
    return value;
}

}  // namespace detail

/// Parses YAML text into a JSON tree (no schema check).
inline Json parse_yaml(const std::string& text, const std::string& what = "config") {
    try {
        const YAML::Node root = YAML::Load(text);
        Json j = detail::yaml_to_json(root);
        if (j.is_null()) {
            return Json::object();
        }
        return j;
    } catch (const YAML::Exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

/// Applies `key=value` with a dotted key; the value is read as YAML.
inline void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const Json value = parse_yaml(assignment.substr(eq + 1), "override '" + key + "'");
    Json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
            (*node)[parts[i]] = Json::object();
        }
        node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value.is_object() && value.empty() ? Json(nullptr) : value;
}

/// Defaults merged with `user`; unknown keys and type mismatches throw
/// ConfigError naming the key.
inline Json resolve_config(const Json& user) {
    return detail::conform(default_config(), user, "");
}

/// FNV-1a over the canonical dump, with output_dir left out so identical
/// experiments written to different directories share a hash.
inline std::string config_hash(const Json& resolved) {
    Json j = resolved;
    j.erase("output_dir");
    return fnv1a_hex(j.dump());
}

/// Typed view of a resolved config.
struct RunConfig {
    Json resolved;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;

    const Json& at(const std::string& section) const { return resolved.at(section); }
    std::string hash() const { return config_hash(resolved); }
};

inline RunConfig make_run_config(const Json& user) {
    RunConfig rc;
    rc.resolved = resolve_config(user);
    rc.seed = rc.resolved.at("seed").get<std::uint64_t>();
    rc.output_dir = rc.resolved.at("output_dir").get<std::string>();
    return rc;
}

/// Reads `path` (empty: defaults only), applies overrides, resolves.
inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    Json doc = Json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) {
            throw IoError("cannot open config file '" + path.string() + "'");
        }
        std::stringstream buf;
        buf << in.rdbuf();
        doc = parse_yaml(buf.str(), path.string());
        if (!doc.is_object()) {
            throw ConfigError(path.string() + ": top level must be a mapping");
        }
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    return make_run_config(doc);
}

// ---------------------------------------------------------------------------
// Section decoders
// ---------------------------------------------------------------------------

inline TargetRule parse_target_rule(const std::string& s) {
    if (s == "least_likely") return TargetRule::least_likely;
    if (s == "fixed_class") return TargetRule::fixed_class;
    throw ConfigError("unknown target_rule '" + s + "' (expected least_likely or fixed_class)");
}

inline PerSampleLoss parse_per_sample_loss(const std::string& s) {
    if (s == "dice") return PerSampleLoss::dice;
    if (s == "ce") return PerSampleLoss::ce;
    throw ConfigError("unknown dpgd_loss '" + s + "' (expected dice or ce)");
}

inline KlOrientation parse_kl_orientation(const std::string& s) {
    if (s == "teacher_student") return KlOrientation::teacher_student;
    if (s == "student_teacher") return KlOrientation::student_teacher;
    throw ConfigError("unknown kl_orientation '" + s + "' (expected teacher_student or student_teacher)");
}

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "md") return ReportFormat::markdown;
    throw ConfigError("unknown report format '" + s + "' (expected json, csv or md)");
}

/// Attack of `kind` with the hyperparameters of an attack section. Keys the
/// section lacks keep their defaults.
inline AttackConfig attack_from_section(const Json& s, AttackKind kind) {
    AttackConfig c = AttackConfig::for_kind(kind);
    c.epsilon = s.at("epsilon").get<double>();
    c.step_size = s.at("step_size").get<double>();
    c.iterations = s.at("iterations").get<int>();
    if (!s.at("random_start").is_null()) {
        c.random_start = s.at("random_start").get<bool>();
    }
    if (s.contains("target_rule")) {
        c.target_rule = parse_target_rule(s.at("target_rule").get<std::string>());
        c.target_class = s.at("target_class").get<int>();
    }
    c.dpgd_loss = parse_per_sample_loss(s.at("dpgd_loss").get<std::string>());
    c.dice_smooth = s.at("dice_smooth").get<double>();
    c.validate();
    return c;
}

inline AttackConfig attack_from_section(const Json& s) {
    return attack_from_section(s, parse_attack_kind(s.at("kind").get<std::string>()));
}

/// The evaluation matrix: one attack per `eval.attacks` entry, all sharing
/// the `attack` section's budget.
inline std::vector<AttackConfig> eval_attacks(const RunConfig& rc) {
    std::vector<AttackConfig> out;
    for (const auto& k : rc.at("eval").at("attacks")) {
        out.push_back(attack_from_section(rc.at("attack"), parse_attack_kind(k.get<std::string>())));
    }
    if (out.empty()) {
        throw ConfigError("eval.attacks must list at least one attack");
    }
    return out;
}

inline std::set<ReportFormat> report_formats(const RunConfig& rc) {
    std::set<ReportFormat> out;
    for (const auto& f : rc.at("eval").at("formats")) {
        out.insert(parse_report_format(f.get<std::string>()));
    }
    return out;
}

inline DistillConfig distill_config(const RunConfig& rc) {
    const Json& s = rc.at("distill");
    DistillConfig c;
    c.strategy = parse_strategy(s.at("strategy").get<std::string>());
    c.alpha_kd = s.at("alpha_kd").get<double>();
    c.tau = s.at("tau").get<double>();
    c.mix_beta = s.at("mix_beta").get<double>();
    c.alpha_at = s.at("alpha_at").get<double>();
    c.kl_orientation = parse_kl_orientation(s.at("kl_orientation").get<std::string>());
    c.epochs = s.at("epochs").get<int>();
    c.batch_size = s.at("batch_size").get<std::size_t>();
    c.sgd.learning_rate = s.at("learning_rate").get<double>();
    c.sgd.momentum = s.at("momentum").get<double>();
    c.sgd.weight_decay = s.at("weight_decay").get<double>();
    c.attack = attack_from_section(s.at("inner_attack"));
    c.seed = rc.seed;
    c.validate();
    return c;
}

/// Seed of the teacher's own training run, kept apart from the student's.
inline std::uint64_t teacher_seed(std::uint64_t seed) { return mix_seed(seed, 0x7eac4e5); }

/// Dataset root: `dataset.root`, else $DARDKIT_DATA_DIR.
inline std::filesystem::path data_root(const RunConfig& rc) {
    std::string root = rc.at("dataset").at("root").get<std::string>();
    if (root.empty()) {
        if (const char* env = std::getenv("DARDKIT_DATA_DIR")) {
            root = env;
        }
    }
    if (root.empty()) {
        throw ConfigError("dataset.root is empty and DARDKIT_DATA_DIR is not set");
    }
    return root;
}

inline Split load_split(const RunConfig& rc) {
    const Json& s = rc.at("dataset");
    const std::string kind = s.at("kind").get<std::string>();
    if (kind == "blobs") {
        BlobsSpec spec;
        spec.seed = rc.seed;
        spec.num_classes = s.at("num_classes").get<std::size_t>();
        spec.dim = s.at("dim").get<std::size_t>();
        spec.spread = s.at("spread").get<double>();
        spec.signature = s.at("signature").get<double>();
        spec.signature_noise = s.at("signature_noise").get<double>();
        return blobs_split(spec, s.at("n_train_per_class").get<std::size_t>(),
                           s.at("n_test_per_class").get<std::size_t>());
    }
    if (kind != "cifar10" && kind != "cifar100") {
        throw ConfigError("unknown dataset.kind '" + kind + "' (expected blobs, cifar10 or cifar100)");
    }
    namespace fs = std::filesystem;
    fs::path root = data_root(rc);
    if (kind == "cifar10" && fs::is_directory(root / "cifar-10-batches-bin")) {
        root /= "cifar-10-batches-bin";
    }
    if (kind == "cifar100" && fs::is_directory(root / "cifar-100-binary")) {
        root /= "cifar-100-binary";
    }
    std::vector<fs::path> train_files, test_files;
    CifarKind ck = CifarKind::cifar10;
    if (kind == "cifar10") {
        for (int i = 1; i <= 5; ++i) {
            train_files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
        }
        test_files.push_back(root / "test_batch.bin");
    } else {
        ck = CifarKind::cifar100;
        train_files.push_back(root / "train.bin");
        test_files.push_back(root / "test.bin");
    }
    for (const auto& f : train_files) {
        if (!fs::exists(f)) throw IoError("dataset file not found: " + f.string());
    }
    for (const auto& f : test_files) {
        if (!fs::exists(f)) throw IoError("dataset file not found: " + f.string());
    }
    Split split;
    split.train = load_cifar(train_files, ck, kind + "-train");
    split.test = load_cifar(test_files, ck, kind + "-test");
    return split;
}

// ---------------------------------------------------------------------------
// Schema printing
// ---------------------------------------------------------------------------

namespace detail {

inline void emit_json(YAML::Emitter& out, const Json& j) {
    if (j.is_object()) {
        out << YAML::BeginMap;
        for (const auto& [k, v] : j.items()) {
            out << YAML::Key << k << YAML::Value;
            emit_json(out, v);
        }
        out << YAML::EndMap;
    } else if (j.is_array()) {
        out << YAML::Flow << YAML::BeginSeq;
        for (const auto& v : j) {
            emit_json(out, v);
        }
        out << YAML::EndSeq;
    } else if (j.is_null()) {
        out << YAML::Null;
    } else if (j.is_boolean()) {
        out << j.get<bool>();
    } else if (j.is_number_integer()) {
        out << j.get<long long>();
    } else if (j.is_number()) {
        out << j.dump();  // shortest round-trip form
    } else {
        const std::string s = j.get<std::string>();
        if (s.empty()) {
            out << YAML::DoubleQuoted << s;
        } else {
            out << s;
        }
    }
}

}  // namespace detail

/// YAML rendering of a config tree.
inline std::string to_yaml(const Json& j) {
    YAML::Emitter out;
    detail::emit_json(out, j);
    return std::string(out.c_str()) + "\n";
}

}  // namespace dardkit
