#include "pll/labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "pll/text.hpp"

namespace pll {

const char* emotion_name(std::size_t index) {
    static constexpr const char* names[kEmotionCount] = {"happy", "neutral", "sad", "fear", "disgust"};
    if (index >= kEmotionCount) throw std::out_of_range("emotion index out of range");
    return names[index];
}

EmotionWheel::EmotionWheel(std::vector<WheelPoint> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("emotion wheel needs at least two emotions");
    for (const auto& p : points_) {
        if (!(p.radius >= 0.0 && p.radius <= 1.0) || !std::isfinite(p.angle_deg)) {
            throw std::invalid_argument("emotion wheel: bad coordinates for '" + p.name + "'");
        }
    }
}

EmotionWheel EmotionWheel::default_wheel() {
    return EmotionWheel({{"happy", 1.0, 27.0},
                         {"neutral", 0.0, 0.0},
                         {"sad", 1.0, 207.0},
                         {"fear", 1.0, 117.0},
                         {"disgust", 1.0, 153.0}});
}

EmotionWheel EmotionWheel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open wheel file " + path.string());
    std::vector<WheelPoint> pts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = text::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream ss(t);
        WheelPoint p;
        std::string r, a;
        if (!(ss >> p.name >> r >> a)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'name radius angle'");
        }
        p.radius = text::parse_double(r);
        p.angle_deg = text::parse_double(a);
        pts.push_back(std::move(p));
    }
    return EmotionWheel(std::move(pts));
}

std::string EmotionWheel::canonical() const {
    std::string out = "# name radius angle_deg\n";
    for (const auto& p : points_) {
        out += p.name + ' ' + text::format_double(p.radius) + ' ' + text::format_double(p.angle_deg) + '\n';
    }
    return out;
}

void EmotionWheel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write wheel file " + path.string());
    out << canonical();
}

std::string EmotionWheel::hash() const { return text::fnv1a_hex(canonical()); }

double emotion_distance(std::size_t i, std::size_t j, const EmotionWheel& wheel) {
    const auto& a = wheel[i];
    const auto& b = wheel[j];
    if (i == j) return 0.0;
    const double dtheta = (a.angle_deg - b.angle_deg) * std::numbers::pi / 180.0;
    const double sq = a.radius * a.radius + b.radius * b.radius - 2.0 * a.radius * b.radius * std::cos(dtheta);
    return std::sqrt(std::max(sq, 0.0));
}

SimilarityMatrix::SimilarityMatrix(std::size_t k, std::vector<double> values) : k_(k), values_(std::move(values)) {
    if (values_.size() != k_ * k_) throw std::invalid_argument("similarity matrix must be k x k");
}

SimilarityMatrix build_similarity(const EmotionWheel& wheel) {
    const std::size_t k = wheel.size();
    std::vector<double> dist(k * k);
    double max_dist = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            dist[i * k + j] = emotion_distance(i, j, wheel);
            max_dist = std::max(max_dist, dist[i * k + j]);
        }
    }
    if (!(max_dist > 0.0)) throw std::invalid_argument("build_similarity: all emotions coincide");
    std::vector<double> gamma(k * k);
    for (std::size_t n = 0; n < k * k; ++n) gamma[n] = 1.0 - dist[n] / max_dist;
    return SimilarityMatrix(k, std::move(gamma));
}

std::size_t CandidateSet::count() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

std::string uniform_provenance(double q) { return "uniform:q=" + text::format_double(q); }

std::string similarity_provenance(const EmotionWheel& wheel) { return "similarity:wheel=" + wheel.hash(); }

namespace {

// One uniform draw per non-true class regardless of its probability, so streams stay aligned
// across ambiguity settings.
CandidateSet draw_candidates(std::size_t y, std::size_t k, std::mt19937_64& rng, auto&& probability) {
    CandidateSet set;
    set.mask.assign(k, 0);
    set.truth = y;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t s = 0; s < k; ++s) {
        if (s == y) {
            set.mask[s] = 1;
            continue;
        }
        set.mask[s] = unif(rng) < probability(s) ? 1 : 0;
    }
    return set;
}

}  // namespace

CandidateSet gen_uniform_candidates(std::size_t y, double q, std::size_t k, std::mt19937_64& rng) {
    if (!(q >= 0.0 && q < 1.0)) throw std::invalid_argument("gen_uniform_candidates: q must lie in [0, 1)");
    if (y >= k) throw std::out_of_range("gen_uniform_candidates: class index out of range");
    auto set = draw_candidates(y, k, rng, [q](std::size_t) { return q; });
    set.provenance = uniform_provenance(q);
    return set;
}

CandidateSet gen_similarity_candidates(std::size_t y, const SimilarityMatrix& gamma, std::mt19937_64& rng,
                                       const std::string& provenance) {
    if (y >= gamma.size()) throw std::out_of_range("gen_similarity_candidates: class index out of range");
    auto set = draw_candidates(y, gamma.size(), rng, [&](std::size_t s) { return gamma(s, y); });
    set.provenance = provenance;
    return set;
}

std::vector<double> uniformize(std::span<const std::uint8_t> mask) {
    const auto n = std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
    if (n == 0) throw std::invalid_argument("uniformize: empty candidate set");
    std::vector<double> out(mask.size(), 0.0);
    const double w = 1.0 / static_cast<double>(n);
    for (std::size_t s = 0; s < mask.size(); ++s) {
        if (mask[s]) out[s] = w;
    }
    return out;
}

std::vector<double> uniformize(const CandidateSet& candidates) { return uniformize(candidates.mask); }

CandidateSet singleton_candidates(std::size_t y, std::size_t k) {
    CandidateSet set;
    set.mask.assign(k, 0);
    set.mask.at(y) = 1;
    set.truth = y;
    set.provenance = uniform_provenance(0.0);
    return set;
}

// ---- candidate-label file --------------------------------------------------

void write_candidate_file(const std::filesystem::path& path, const std::vector<CandidateSet>& sets) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::size_t k = sets.empty() ? kEmotionCount : sets.front().classes();
    out << "# pllkit candidate labels v1: sample_id,truth,mask(" << k << " columns of 0/1),provenance\n";
    out << "sample_id,truth";
    for (std::size_t s = 0; s < k; ++s) out << ",m" << s;
    out << ",provenance\n";
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto& c = sets[i];
        if (c.classes() != k) throw std::invalid_argument("write_candidate_file: inconsistent class count");
        out << i << ',' << c.truth;
        for (auto m : c.mask) out << ',' << (m ? 1 : 0);
        out << ',' << c.provenance << '\n';
    }
}

std::vector<CandidateSet> read_candidate_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    std::size_t k = 0;
    std::vector<CandidateSet> sets;
    auto fail = [&](const std::string& why) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = text::split(line, ',');
        if (k == 0) {
            if (fields.size() < 4 || fields[0] != "sample_id" || fields[1] != "truth" ||
                fields.back() != "provenance") {
                fail("bad header");
            }
            k = fields.size() - 3;
            continue;
        }
        if (fields.size() != k + 3) fail("expected " + std::to_string(k + 3) + " fields");
        CandidateSet c;
        if (text::parse_int(fields[0]) != static_cast<long long>(sets.size())) fail("sample ids must be consecutive");
        const long long y = text::parse_int(fields[1]);
        if (y < 0 || static_cast<std::size_t>(y) >= k) fail("truth index out of range");
        c.truth = static_cast<std::size_t>(y);
        c.mask.resize(k);
        for (std::size_t s = 0; s < k; ++s) {
            const auto& f = fields[2 + s];
            if (f != "0" && f != "1") fail("mask entries must be 0 or 1");
            c.mask[s] = f == "1" ? 1 : 0;
        }
        if (!c.mask[c.truth]) fail("ground truth missing from its candidate set");
        c.provenance = fields.back();
        sets.push_back(std::move(c));
    }
    if (k == 0) throw std::runtime_error(path.string() + ": missing header");
    return sets;
}

}  // namespace pll
