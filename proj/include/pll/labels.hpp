#pragma once

// Candidate-label generation.
//
// Two ambiguity models: every non-true class joins the candidate set independently with a
// constant probability q, or with the similarity score gamma(s, y) derived from each
// emotion's position on a valence/arousal wheel.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pll {

/// Class order used throughout the toolkit.
enum class Emotion : std::size_t { happy = 0, neutral = 1, sad = 2, fear = 3, disgust = 4 };
inline constexpr std::size_t kEmotionCount = 5;
const char* emotion_name(std::size_t index);

struct WheelPoint {
    std::string name;
    double radius = 0.0;     // [0, 1]
    double angle_deg = 0.0;
};

/// Polar positions of the emotion classes, indexed by class.
class EmotionWheel {
public:
    EmotionWheel() = default;
    explicit EmotionWheel(std::vector<WheelPoint> points);

    /// neutral (0, 0°), happy (1, 27°), sad (1, 207°), fear (1, 117°), disgust (1, 153°).
    static EmotionWheel default_wheel();

    /// Plain text, one `name radius angle_deg` line per class in class order; `#` comments.
    static EmotionWheel load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return points_.size(); }
    const WheelPoint& operator[](std::size_t i) const { return points_[i]; }
    const std::vector<WheelPoint>& points() const { return points_; }

    /// Canonical text form (what `save` writes) and its FNV-1a hash.
    std::string canonical() const;
    std::string hash() const;

private:
    std::vector<WheelPoint> points_;
};

/// sqrt(r_i² + r_j² - 2 r_i r_j cos(θ_i - θ_j)).
double emotion_distance(std::size_t i, std::size_t j, const EmotionWheel& wheel);

/// γ(i, j) = 1 - dist(i, j) / max_{a,b} dist(a, b).
class SimilarityMatrix {
public:
    SimilarityMatrix() = default;
    SimilarityMatrix(std::size_t k, std::vector<double> values);

    std::size_t size() const { return k_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * k_ + j]; }
    const std::vector<double>& values() const { return values_; }

private:
    std::size_t k_ = 0;
    std::vector<double> values_;
};

SimilarityMatrix build_similarity(const EmotionWheel& wheel);

/// Candidate mask of one sample. `truth` is kept for evaluation and never reaches a loss.
struct CandidateSet {
    std::vector<std::uint8_t> mask;
    std::size_t truth = 0;
    std::string provenance;

    std::size_t classes() const { return mask.size(); }
    std::size_t count() const;
    bool contains(std::size_t c) const { return mask.at(c) != 0; }
    bool operator==(const CandidateSet&) const = default;
};

std::string uniform_provenance(double q);
std::string similarity_provenance(const EmotionWheel& wheel);

/// Includes y, and each other class independently with probability q. Requires 0 <= q < 1.
CandidateSet gen_uniform_candidates(std::size_t y, double q, std::size_t k, std::mt19937_64& rng);

/// Includes y, and each other class s independently with probability γ(s, y).
CandidateSet gen_similarity_candidates(std::size_t y, const SimilarityMatrix& gamma, std::mt19937_64& rng,
                                       const std::string& provenance = "similarity");

/// 1/|Y| on candidates, 0 elsewhere.
std::vector<double> uniformize(std::span<const std::uint8_t> mask);
std::vector<double> uniformize(const CandidateSet& candidates);

/// Singleton sets {y}, i.e. fully supervised labels expressed as candidates.
CandidateSet singleton_candidates(std::size_t y, std::size_t k);

// ---- candidate-label file --------------------------------------------------
//
//   # pllkit candidate labels v1: sample_id,truth,mask(k columns of 0/1),provenance
//   sample_id,truth,m0,m1,m2,m3,m4,provenance
//   0,3,0,0,1,1,0,uniform:q=0.6
//
// sample_id is the row index of the sample in its dataset file.

void write_candidate_file(const std::filesystem::path& path, const std::vector<CandidateSet>& sets);
std::vector<CandidateSet> read_candidate_file(const std::filesystem::path& path);

}  // namespace pll
