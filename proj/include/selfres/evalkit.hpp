// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/kernels.hpp"
#include "selfres/model.hpp"
#include "selfres/sampler.hpp"

namespace selfres {

inline constexpr const char* kUnknownLabel = "Unknown";

// Ordered label set. The order is fixed: it defines confusion-matrix axes and
// breaks classification ties toward the lower index.
class ClassSet {
public:
    ClassSet() : ClassSet(default_names()) {}

    explicit ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) throw ConfigError("class set: need at least one class");
        lower_.reserve(names_.size());
        for (const std::string& n : names_) {
            if (n.empty()) throw ConfigError("class set: empty class name");
            lower_.push_back(to_lower(n));
        }
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            for (std::size_t j = i + 1; j < lower_.size(); ++j) {
                if (lower_[i] == lower_[j]) {
                    throw ConfigError("class set: duplicate name '" + names_[i] + "'");
                }
            }
        }
    }

    static std::vector<std::string> default_names() {
        return {"Abuse",    "Arrest",   "Arson",    "Assault",     "Burglary", "Fighting",
                "Robbery",  "Shooting", "Stealing", "Shoplifting", "Vandalism"};
    }

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    const std::string& lower_name(std::size_t i) const { return lower_[i]; }
    const std::vector<std::string>& names() const { return names_; }

    // Index of a class by exact name; npos when absent.
    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return i;
        }
        return npos;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::vector<std::string> names_;
    std::vector<std::string> lower_;
};

struct EvalRecord {
    std::string video_id;
    std::string true_label;
    std::string predicted_text;
};

// Maps free text onto the class set: lowercase the text, find every class
// name occurring as a substring, and return the earliest occurrence; ties at
// the same position go to the longer name. No match maps to Unknown.
inline std::string normalize_label(const std::string& text, const ClassSet& classes) {
    const std::string lower = to_lower(text);
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    std::size_t best_index = ClassSet::npos;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const std::size_t pos = lower.find(classes.lower_name(i));
        if (pos == std::string::npos) continue;
        const std::size_t len = classes.lower_name(i).size();
        if (pos < best_pos || (pos == best_pos && len > best_len)) {
            best_pos = pos;
            best_len = len;
            best_index = i;
        }
    }
    return best_index == ClassSet::npos ? kUnknownLabel : classes.name(best_index);
}

namespace detail {

// First index of the maximum value; exact ties resolve to the lower index.
inline std::size_t argmax_lowest(const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

}  // namespace detail

// Zero-shot classification: cosine between the signature's pooled state and
// each class prototype projected into the hidden space. A zero pooled vector
// classifies as Unknown.
inline std::string classify(const Signature& sig, const ClassSet& classes,
                            const Weights& weights, const ModelConfig& config) {
    if (sig.pooled.size() != config.d) {
        throw UsageError("classify: pooled vector has wrong width");
    }
    bool all_zero = true;
    for (float v : sig.pooled) {
        if (v != 0.0f) {
            all_zero = false;
            break;
        }
    }
    if (all_zero) return kUnknownLabel;

    std::vector<double> scores(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const std::vector<float> proto = class_prototype(classes.name(i), weights);
        Matrix row(1, config.patch_dim);
        row.data = proto;
        const Matrix projected = project_visual(row, weights);
        scores[i] = cosine(std::span<const float>(sig.pooled),
                           std::span<const float>(projected.data));
    }
    return classes.name(detail::argmax_lowest(scores));
}

// Fraction of records whose normalized prediction matches the true label.
// Unknown never matches.
inline double accuracy(const std::vector<EvalRecord>& records, const ClassSet& classes) {
    if (records.empty()) throw UsageError("accuracy: no records");
    std::size_t correct = 0;
    for (const EvalRecord& r : records) {
        if (normalize_label(r.predicted_text, classes) == r.true_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

// True-class rows by predicted-class columns, with one extra Unknown column
// so every record is conserved.
struct ConfusionMatrix {
    std::vector<std::string> row_names;          // class names
    std::vector<std::string> col_names;          // class names + Unknown
    std::vector<std::vector<std::size_t>> counts;  // K x (K+1)

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& row : counts) {
            for (std::size_t c : row) n += c;
        }
        return n;
    }

    std::size_t diagonal() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
        return n;
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<EvalRecord>& records,
                                        const ClassSet& classes) {
    if (records.empty()) throw UsageError("confusion_matrix: no records");
    ConfusionMatrix m;
    m.row_names = classes.names();
    m.col_names = classes.names();
    m.col_names.push_back(kUnknownLabel);
    m.counts.assign(classes.size(), std::vector<std::size_t>(classes.size() + 1, 0));
    for (const EvalRecord& r : records) {
        const std::size_t row = classes.index_of(r.true_label);
        if (row == ClassSet::npos) {
            throw InputError("confusion_matrix: true label '" + r.true_label +
                             "' is not in the class set (video " + r.video_id + ")");
        }
        const std::string predicted = normalize_label(r.predicted_text, classes);
        const std::size_t col =
            predicted == kUnknownLabel ? classes.size() : classes.index_of(predicted);
        ++m.counts[row][col];
    }
    return m;
}

// ---------------------------------------------------------------------------
// CSV surfaces. Predictions: header video_id,true_label,predicted_text with
// standard quoting (fields containing commas, quotes, or newlines are wrapped
// in double quotes, inner quotes doubled).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

// Splits one logical CSV line (no embedded newlines) into fields.
inline std::vector<std::string> csv_split(const std::string& line, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    i += 2;
                    continue;
                }
                quoted = false;
                ++i;
                if (i < line.size() && line[i] != ',') {
                    throw IoError("csv line " + std::to_string(lineno) +
                                  ": junk after closing quote");
                }
                continue;
            }
            cur += c;
            ++i;
        } else if (c == '"') {
            if (!cur.empty()) {
                throw IoError("csv line " + std::to_string(lineno) +
                              ": quote inside unquoted field");
            }
            quoted = true;
            ++i;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
            ++i;
        } else {
            cur += c;
            ++i;
        }
    }
    if (quoted) {
        throw IoError("csv line " + std::to_string(lineno) + ": unterminated quote");
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

inline constexpr const char* kPredictionsHeader = "video_id,true_label,predicted_text";

inline void write_predictions_csv(const std::filesystem::path& path,
                                  const std::vector<EvalRecord>& records) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << kPredictionsHeader << "\n";
    for (const EvalRecord& r : records) {
        f << detail::csv_escape(r.video_id) << "," << detail::csv_escape(r.true_label) << ","
          << detail::csv_escape(r.predicted_text) << "\n";
    }
}

inline std::vector<EvalRecord> read_predictions_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(f, line)) {
        throw IoError(path.string() + " line 1: empty file, expected header");
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kPredictionsHeader) {
        throw IoError(path.string() + " line 1: expected header '" +
                      std::string(kPredictionsHeader) + "'");
    }
    std::vector<EvalRecord> records;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        try {
            fields = detail::csv_split(line, lineno);
        } catch (const IoError& e) {
            throw IoError(path.string() + ": " + e.what());
        }
        if (fields.size() != 3) {
            throw IoError(path.string() + " line " + std::to_string(lineno) + ": expected 3 fields, got " +
                          std::to_string(fields.size()));
        }
        records.push_back({fields[0], fields[1], fields[2]});
    }
    if (records.empty()) {
        throw IoError(path.string() + ": no records");
    }
    return records;
}

inline void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << "true\\predicted";
    for (const std::string& c : m.col_names) f << "," << detail::csv_escape(c);
    f << "\n";
    for (std::size_t i = 0; i < m.row_names.size(); ++i) {
        f << detail::csv_escape(m.row_names[i]);
        for (std::size_t j = 0; j < m.col_names.size(); ++j) f << "," << m.counts[i][j];
        f << "\n";
    }
}

// Accuracy as a percentage with one decimal, e.g. 0.446 -> "44.6".
inline std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
    return buf;
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t width) {
    std::string out = s;
    while (out.size() < width) out += ' ';
    return out;
}

}  // namespace detail

// One row of the benchmark report: method, segment count, sampling layer,
// accuracy percent.
inline std::string format_report_row(const std::string& method, const std::string& segments,
                                     const std::string& layer, double acc) {
    return detail::pad(method, 24) + detail::pad(segments, 6) + detail::pad(layer, 6) +
           format_percent(acc);
}

inline std::string report_header() {
    return detail::pad("Method", 24) + detail::pad("N_s", 6) + detail::pad("r_j", 6) +
           "Accuracy";
}

}  // namespace selfres
