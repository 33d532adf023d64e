#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dardkit/attacks.hpp"
#include "dardkit/checkpoint.hpp"
#include "dardkit/data.hpp"
#include "dardkit/error.hpp"
#include "dardkit/model.hpp"

namespace dardkit {

/// FNV-1a 64 of a string, as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline nlohmann::json attack_to_json(const AttackConfig& c) {
    nlohmann::json j;
    j["kind"] = to_string(c.kind);
    j["epsilon"] = c.epsilon;
    if (c.kind != AttackKind::fgsm) {
        j["step_size"] = c.step_size;
        j["iterations"] = c.iterations;
        j["random_start"] = c.random_start;
    }
    if (c.kind == AttackKind::tpgd) {
        j["target_rule"] = c.target_rule == TargetRule::least_likely ? "least-likely" : "fixed-class";
        if (c.target_rule == TargetRule::fixed_class) {
            j["target_class"] = c.target_class;
        }
    }
    if (c.kind == AttackKind::dpgd) {
        j["dpgd_loss"] = c.dpgd_loss == PerSampleLoss::dice ? "dice" : "ce";
        j["dice_smooth"] = c.dice_smooth;
    }
    return j;
}

inline std::string attack_hash(const AttackConfig& c) { return fnv1a_hex(attack_to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

namespace detail {

/// Runs fn(i) for every batch index on `workers` threads; fn returns a hit
/// count and the counts are summed, so the total is independent of scheduling.
inline std::size_t parallel_count(std::size_t n, unsigned workers, const std::function<std::size_t(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            total += fn(i);
        }
        return total;
    }
    std::vector<std::size_t> counts(n, 0);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    counts[i] = fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    std::size_t total = 0;
    for (auto c : counts) {
        total += c;
    }
    return total;
}

inline std::size_t count_correct(const Matrix& logits, const std::vector<int>& labels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += argmax_row(logits.row(static_cast<Eigen::Index>(i))) == labels[i] ? 1 : 0;
    }
    return hits;
}

inline std::size_t total_size(const std::vector<Batch>& bs, std::size_t num_classes) {
    std::size_t n = 0;
    for (const auto& b : bs) {
        for (int y : b.labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
                throw ConfigError("evaluation label " + std::to_string(y) + " is outside the model's " +
                                  std::to_string(num_classes) + " classes");
            }
        }
        n += b.size();
    }
    if (n == 0) {
        throw ConfigError("evaluation set is empty");
    }
    return n;
}

}  // namespace detail

/// Percentage of samples whose argmax prediction (ties to the smallest index)
/// equals the label.
inline double accuracy(const Classifier& model, const std::vector<Batch>& bs, unsigned workers = 1) {
    const std::size_t n = detail::total_size(bs, model.num_classes());
    const std::size_t hits = detail::parallel_count(bs.size(), workers, [&](std::size_t i) {
        return detail::count_correct(model.forward(bs[i].inputs), bs[i].labels);
    });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

/// White-box accuracy on inputs attacked against `model` itself. Batch i uses
/// the random-start seed mix_seed(seed, i).
inline double robust_accuracy(const Classifier& model, const std::vector<Batch>& bs, const AttackConfig& attack,
                              std::uint64_t seed = 0, unsigned workers = 1) {
    attack.validate();
    const std::size_t n = detail::total_size(bs, model.num_classes());
    const std::size_t hits = detail::parallel_count(bs.size(), workers, [&](std::size_t i) {
        const AdvBatch adv = run_attack(model, bs[i], attack, mix_seed(seed, i));
        return detail::count_correct(model.forward(adv.adversarials), bs[i].labels);
    });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

/// Mean of clean and robust accuracy (both in percent).
inline double w_robust(double clean, double robust) {
    if (!(clean >= 0.0 && clean <= 100.0) || !(robust >= 0.0 && robust <= 100.0)) {
        throw ContractViolation("w_robust: accuracies must lie in [0, 100], got " + std::to_string(clean) + " and " +
                                std::to_string(robust));
    }
    return (clean + robust) / 2.0;
}

/// Half-up rounding to `decimals` places (65.505 -> 65.51). The small bias
/// absorbs binary representation error of decimal inputs.
inline double round_half_up(double v, int decimals = 2) {
    const double scale = std::pow(10.0, decimals);
    return std::floor(v * scale + 0.5 + 1e-7) / scale;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct AttackEntry {
    std::string attack;
    std::string config_hash;
    double clean_acc = 0.0;
    double robust_acc = 0.0;
    double w_robust = 0.0;

    bool operator==(const AttackEntry&) const = default;
};

struct EvalReport {
    std::string model_id;
    std::string dataset_id;
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    std::vector<AttackEntry> entries;

    bool operator==(const EvalReport&) const = default;

    /// Adds an entry with accuracies rounded to reporting precision; w_robust
    /// is derived from the rounded values.
    void add(const std::string& attack, const std::string& hash, double clean, double robust) {
        AttackEntry e;
        e.attack = attack;
        e.config_hash = hash;
        e.clean_acc = round_half_up(clean);
        e.robust_acc = round_half_up(robust);
        e.w_robust = round_half_up(w_robust(e.clean_acc, e.robust_acc));
        entries.push_back(e);
    }
};

inline void to_json(nlohmann::json& j, const AttackEntry& e) {
    j = {{"attack", e.attack},
         {"config_hash", e.config_hash},
         {"clean_acc", e.clean_acc},
         {"robust_acc", e.robust_acc},
         {"w_robust", e.w_robust}};
}

inline void from_json(const nlohmann::json& j, AttackEntry& e) {
    j.at("attack").get_to(e.attack);
    j.at("config_hash").get_to(e.config_hash);
    j.at("clean_acc").get_to(e.clean_acc);
    j.at("robust_acc").get_to(e.robust_acc);
    j.at("w_robust").get_to(e.w_robust);
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    j = {{"model_id", r.model_id},
         {"dataset_id", r.dataset_id},
         {"seed", r.seed},
         {"n_samples", r.n_samples},
         {"entries", r.entries}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
    j.at("model_id").get_to(r.model_id);
    j.at("dataset_id").get_to(r.dataset_id);
    j.at("seed").get_to(r.seed);
    j.at("n_samples").get_to(r.n_samples);
    j.at("entries").get_to(r.entries);
}

/// Canonical JSON: keys sorted, two-space indent, trailing newline.
inline std::string report_json(const EvalReport& r) {
    nlohmann::json j = r;
    return j.dump(2) + "\n";
}

inline EvalReport parse_report_json(const std::string& text) {
    try {
        return nlohmann::json::parse(text).get<EvalReport>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed report JSON: ") + e.what());
    }
}

namespace detail {

inline std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace detail

inline std::string report_csv(const EvalReport& r) {
    std::string out = "model_id,dataset_id,attack,config_hash,clean_acc,robust_acc,w_robust\n";
    for (const auto& e : r.entries) {
        out += r.model_id + "," + r.dataset_id + "," + e.attack + "," + e.config_hash + "," +
               detail::fixed2(e.clean_acc) + "," + detail::fixed2(e.robust_acc) + "," + detail::fixed2(e.w_robust) +
               "\n";
    }
    return out;
}

/// One row per attack: | Attack | Defense | Clean | Robust | W-Robust |.
inline std::string report_markdown(const EvalReport& r) {
    std::string out = "| Attack | Defense | Clean | Robust | W-Robust |\n";
    out += "|---|---|---:|---:|---:|\n";
    for (const auto& e : r.entries) {
        out += "| " + e.attack + " | " + r.model_id + " | " + detail::fixed2(e.clean_acc) + "% | " +
               detail::fixed2(e.robust_acc) + "% | " + detail::fixed2(e.w_robust) + "% |\n";
    }
    return out;
}

/// Defense x {Clean, attacks...} table over several reports; the column
/// maximum is bolded (all tied maxima).
inline std::string comparison_markdown(const std::vector<EvalReport>& reports) {
    std::vector<std::string> attacks;
    for (const auto& r : reports) {
        for (const auto& e : r.entries) {
            if (std::find(attacks.begin(), attacks.end(), e.attack) == attacks.end()) {
                attacks.push_back(e.attack);
            }
        }
    }
    const std::size_t cols = attacks.size() + 1;
    std::vector<std::vector<std::optional<double>>> cells(reports.size(), std::vector<std::optional<double>>(cols));
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (const auto& e : reports[i].entries) {
            cells[i][0] = e.clean_acc;
            const auto pos = std::find(attacks.begin(), attacks.end(), e.attack) - attacks.begin();
            cells[i][static_cast<std::size_t>(pos) + 1] = e.robust_acc;
        }
    }
    std::vector<double> best(cols, -1.0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (row[c]) {
                best[c] = std::max(best[c], *row[c]);
            }
        }
    }
    std::string out = "| Defense | Clean";
    for (const auto& a : attacks) {
        out += " | " + a;
    }
    out += " |\n|---";
    for (std::size_t c = 0; c < cols; ++c) {
        out += "|---:";
    }
    out += "|\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out += "| " + reports[i].model_id;
        for (std::size_t c = 0; c < cols; ++c) {
            if (!cells[i][c]) {
                out += " | -";
                continue;
            }
            const std::string v = detail::fixed2(*cells[i][c]) + "%";
            out += *cells[i][c] == best[c] ? " | **" + v + "**" : " | " + v;
        }
        out += " |\n";
    }
    return out;
}

enum class ReportFormat { json, csv, markdown };

/// Writes report.json / report.csv / report.md into `dir`.
inline void emit_report(const EvalReport& r, const std::filesystem::path& dir,
                        const std::set<ReportFormat>& formats = {ReportFormat::json, ReportFormat::csv,
                                                                 ReportFormat::markdown}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create report directory '" + dir.string() + "': " + ec.message());
    }
    if (formats.count(ReportFormat::json)) {
        detail::write_text_atomic(dir / "report.json", report_json(r));
    }
    if (formats.count(ReportFormat::csv)) {
        detail::write_text_atomic(dir / "report.csv", report_csv(r));
    }
    if (formats.count(ReportFormat::markdown)) {
        detail::write_text_atomic(dir / "report.md", report_markdown(r));
    }
}

/// Clean accuracy plus one robust-accuracy entry per attack.
inline EvalReport evaluate(const Classifier& model, const Dataset& data, const std::vector<AttackConfig>& attacks,
                           const std::string& model_id, std::uint64_t seed, std::size_t batch_size = 256,
                           unsigned workers = 1) {
    const auto bs = sequential_batches(data, batch_size);
    EvalReport r;
    r.model_id = model_id;
    r.dataset_id = data.id;
    r.seed = seed;
    r.n_samples = data.size();
    const double clean = accuracy(model, bs, workers);
    for (const auto& a : attacks) {
        r.add(attack_name(a), attack_hash(a), clean, robust_accuracy(model, bs, a, seed, workers));
    }
    return r;
}

}  // namespace dardkit
