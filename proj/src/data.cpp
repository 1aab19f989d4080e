#include "pll/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include "pll/rng.hpp"
#include "pll/text.hpp"

namespace pll {

std::vector<int> Dataset::subjects() const {
    std::set<int> ids;
    for (const auto& s : samples) ids.insert(s.subject);
    return {ids.begin(), ids.end()};
}

std::vector<std::size_t> Dataset::subject_indices(int subject) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].subject == subject) rows.push_back(i);
    }
    return rows;
}

std::string Dataset::fingerprint() const {
    std::string bytes;
    bytes.reserve(samples.size() * (feature_count * sizeof(double) + 5 * sizeof(long long)));
    auto put = [&bytes](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
    const auto fc = static_cast<unsigned long long>(feature_count);
    put(&fc, sizeof fc);
    for (const auto& s : samples) {
        const long long ids[5] = {s.subject, s.session, s.trial, s.segment, static_cast<long long>(s.label)};
        put(ids, sizeof ids);
        put(s.features.data(), s.features.size() * sizeof(double));
    }
    return text::fnv1a_hex(bytes);
}

void SynthConfig::validate() const {
    if (subjects <= 0 || segments <= 0) throw std::invalid_argument("synth: subject and segment counts must be positive");
    if (features == 0) throw std::invalid_argument("synth: feature count must be positive");
    if (classes == 0 || classes > static_cast<std::size_t>(kTrialsPerFold)) {
        throw std::invalid_argument("synth: class count must lie in [1, 5]");
    }
    if (!(separation >= 0.0) || !std::isfinite(separation)) throw std::invalid_argument("synth: separation must be >= 0");
    if (!(noise > 0.0) || !std::isfinite(noise)) throw std::invalid_argument("synth: noise must be positive");
}

std::map<std::string, std::string> SynthConfig::to_key_values() const {
    return {{"subjects", std::to_string(subjects)},
            {"segments", std::to_string(segments)},
            {"features", std::to_string(features)},
            {"classes", std::to_string(classes)},
            {"separation", text::format_double(separation)},
            {"noise", text::format_double(noise)},
            {"seed", std::to_string(seed)},
            {"generator", "class-gaussian-v1"}};
}

SynthConfig SynthConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    SynthConfig c;
    auto get = [&kv](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("subjects")) c.subjects = static_cast<int>(text::parse_int(*v));
    if (auto v = get("segments")) c.segments = static_cast<int>(text::parse_int(*v));
    if (auto v = get("features")) c.features = static_cast<std::size_t>(text::parse_int(*v));
    if (auto v = get("classes")) c.classes = static_cast<std::size_t>(text::parse_int(*v));
    if (auto v = get("separation")) c.separation = text::parse_double(*v);
    if (auto v = get("noise")) c.noise = text::parse_double(*v);
    if (auto v = get("seed")) c.seed = static_cast<std::uint64_t>(text::parse_int(*v));
    return c;
}

std::size_t trial_class(int session, int trial, std::size_t classes) {
    if (session < 1 || trial < 1) throw std::out_of_range("trial_class: ids start at 1");
    return static_cast<std::size_t>((trial - 1) + (session - 1)) % classes;
}

Dataset synth_generate(const SynthConfig& config) {
    config.validate();
    auto rng = make_rng(config.seed, Stream::synth);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t s = config.features;

    Dataset data;
    data.feature_count = s;
    for (int subj = 1; subj <= config.subjects; ++subj) {
        std::vector<std::vector<double>> means(config.classes, std::vector<double>(s));
        for (auto& m : means) {
            for (auto& v : m) v = config.separation * unit(rng);
        }
        const std::size_t first = data.samples.size();
        for (int session = 1; session <= kSessions; ++session) {
            for (int trial = 1; trial <= kTrialsPerSession; ++trial) {
                const std::size_t c = trial_class(session, trial, config.classes);
                for (int seg = 1; seg <= config.segments; ++seg) {
                    Sample smp{subj, session, trial, seg, c, std::vector<double>(s)};
                    for (std::size_t f = 0; f < s; ++f) smp.features[f] = means[c][f] + config.noise * normal(rng);
                    data.samples.push_back(std::move(smp));
                }
            }
        }
        std::vector<std::size_t> rows(data.samples.size() - first);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = first + i;
        const auto mm = MinMax::fit(data, rows);
        for (std::size_t r : rows) mm.apply(data.samples[r].features, data.samples[r].features);
    }
    return data;
}

// ---- CSV -------------------------------------------------------------------

namespace {

std::string feature_column(std::size_t f) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "f%03zu", f);
    return buf;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "subject,session,trial,segment,label";
    for (std::size_t f = 0; f < data.feature_count; ++f) out << ',' << feature_column(f);
    out << '\n';
    std::string line;
    for (const auto& s : data.samples) {
        if (s.features.size() != data.feature_count) throw std::invalid_argument("save_dataset: ragged features");
        line = std::to_string(s.subject) + ',' + std::to_string(s.session) + ',' + std::to_string(s.trial) + ',' +
               std::to_string(s.segment) + ',' + std::to_string(s.label);
        for (double v : s.features) {
            line += ',';
            line += text::format_double(v);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t row = 0;
    auto fail = [&](const std::string& why) {
        throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": " + why);
    };
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = text::split(line, ',');
    static const char* fixed[] = {"subject", "session", "trial", "segment", "label"};
    if (header.size() < 6) fail("header needs subject,session,trial,segment,label and feature columns");
    for (std::size_t i = 0; i < 5; ++i) {
        if (text::trim(header[i]) != fixed[i]) fail(std::string("header column ") + std::to_string(i + 1) +
                                                    " must be '" + fixed[i] + "'");
    }
    Dataset data;
    data.feature_count = header.size() - 5;
    for (std::size_t f = 0; f < data.feature_count; ++f) {
        if (text::trim(header[5 + f]) != feature_column(f)) fail("feature columns must be f000, f001, ...");
    }
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = text::split(line, ',');
        if (fields.size() != header.size()) {
            fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        }
        Sample s;
        try {
            s.subject = static_cast<int>(text::parse_int(fields[0]));
            s.session = static_cast<int>(text::parse_int(fields[1]));
            s.trial = static_cast<int>(text::parse_int(fields[2]));
            s.segment = static_cast<int>(text::parse_int(fields[3]));
            const long long label = text::parse_int(fields[4]);
            if (label < 0 || label >= 5) fail("label " + std::to_string(label) + " outside [0, 5)");
            s.label = static_cast<std::size_t>(label);
            s.features.resize(data.feature_count);
            for (std::size_t f = 0; f < data.feature_count; ++f) {
                s.features[f] = text::parse_double(fields[5 + f]);
                if (!std::isfinite(s.features[f])) fail("non-finite feature " + feature_column(f));
            }
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (s.session < 1 || s.trial < 1 || s.segment < 1) fail("session, trial and segment ids start at 1");
        data.samples.push_back(std::move(s));
    }
    return data;
}

std::filesystem::path config_echo_path(const std::filesystem::path& data_path) {
    auto p = data_path;
    p += ".config";
    return p;
}

// ---- folds -----------------------------------------------------------------

int fold_of_trial(int trial) {
    if (trial < 1 || trial > kTrialsPerSession) throw std::out_of_range("fold_of_trial: trial outside 1..15");
    return (trial - 1) / kTrialsPerFold + 1;
}

std::vector<int> assign_folds(const Dataset& data) {
    std::map<int, std::map<int, std::set<int>>> trials;  // subject -> session -> trials
    for (const auto& s : data.samples) trials[s.subject][s.session].insert(s.trial);
    for (const auto& [subject, sessions] : trials) {
        if (sessions.size() != static_cast<std::size_t>(kSessions) || sessions.begin()->first != 1 ||
            sessions.rbegin()->first != kSessions) {
            throw std::invalid_argument("assign_folds: subject " + std::to_string(subject) + " needs sessions 1..3");
        }
        for (const auto& [session, ids] : sessions) {
            if (ids.size() != static_cast<std::size_t>(kTrialsPerSession) || *ids.begin() != 1 ||
                *ids.rbegin() != kTrialsPerSession) {
                throw std::invalid_argument("assign_folds: subject " + std::to_string(subject) + " session " +
                                            std::to_string(session) + " has " + std::to_string(ids.size()) +
                                            " trials, expected 1..15");
            }
        }
    }
    std::vector<int> folds(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) folds[i] = fold_of_trial(data.samples[i].trial);
    return folds;
}

Split split_subject(const Dataset& data, const std::vector<int>& folds, int subject, int test_fold) {
    if (folds.size() != data.size()) throw std::invalid_argument("split_subject: fold map size differs");
    if (test_fold < 1 || test_fold > kFolds) throw std::out_of_range("split_subject: fold must be 1..3");
    Split split;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.samples[i].subject != subject) continue;
        (folds[i] == test_fold ? split.test : split.train).push_back(i);
    }
    if (split.train.empty() || split.test.empty()) {
        throw std::invalid_argument("split_subject: no samples for subject " + std::to_string(subject));
    }
    return split;
}

// ---- normalization ---------------------------------------------------------

MinMax MinMax::fit(const Dataset& data, std::span<const std::size_t> rows) {
    if (rows.empty()) throw std::invalid_argument("MinMax::fit: no rows");
    MinMax mm;
    const auto& first = data.samples.at(rows.front()).features;
    mm.lo = first;
    mm.hi = first;
    for (std::size_t r : rows) {
        const auto& x = data.samples.at(r).features;
        for (std::size_t f = 0; f < x.size(); ++f) {
            mm.lo[f] = std::min(mm.lo[f], x[f]);
            mm.hi[f] = std::max(mm.hi[f], x[f]);
        }
    }
    return mm;
}

void MinMax::apply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != lo.size() || out.size() != lo.size()) throw std::invalid_argument("MinMax::apply: width differs");
    for (std::size_t f = 0; f < in.size(); ++f) {
        const double range = hi[f] - lo[f];
        out[f] = range > 0.0 ? std::clamp((in[f] - lo[f]) / range, 0.0, 1.0) : 0.0;
    }
}

std::vector<double> MinMax::apply(std::span<const double> in) const {
    std::vector<double> out(in.size());
    apply(in, out);
    return out;
}

}  // namespace pll
