#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "pll/labels.hpp"

using namespace pll;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "pllkit_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// Cartesian oracle for the wheel: positions as (x, y), distance by Pythagoras.
double cartesian_distance(const WheelPoint& a, const WheelPoint& b) {
    const double ra = a.angle_deg * std::numbers::pi / 180.0, rb = b.angle_deg * std::numbers::pi / 180.0;
    const double dx = a.radius * std::cos(ra) - b.radius * std::cos(rb);
    const double dy = a.radius * std::sin(ra) - b.radius * std::sin(rb);
    return std::hypot(dx, dy);
}

}  // namespace

TEST_SUITE("labels") {

TEST_CASE("class order and names") {
    CHECK(std::string(emotion_name(0)) == "happy");
    CHECK(std::string(emotion_name(1)) == "neutral");
    CHECK(std::string(emotion_name(2)) == "sad");
    CHECK(std::string(emotion_name(3)) == "fear");
    CHECK(std::string(emotion_name(4)) == "disgust");
    CHECK_THROWS(emotion_name(5));
}

TEST_CASE("uniform candidates always contain the true label") {
    std::mt19937_64 rng(1);
    for (double q : {0.0, 0.3, 0.95}) {
        for (int i = 0; i < 2000; ++i) {
            const std::size_t y = static_cast<std::size_t>(i) % 5;
            const auto c = gen_uniform_candidates(y, q, 5, rng);
            CHECK(c.contains(y));
            CHECK(c.truth == y);
        }
    }
}

TEST_CASE("q = 0 gives singleton sets") {
    std::mt19937_64 rng(2);
    for (std::size_t y = 0; y < 5; ++y) {
        const auto c = gen_uniform_candidates(y, 0.0, 5, rng);
        CHECK(c.count() == 1);
        CHECK(c == singleton_candidates(y, 5));
    }
}

TEST_CASE("q outside [0, 1) is rejected") {
    std::mt19937_64 rng(3);
    CHECK_THROWS(gen_uniform_candidates(0, 1.0, 5, rng));
    CHECK_THROWS(gen_uniform_candidates(0, -0.1, 5, rng));
    CHECK_THROWS(gen_uniform_candidates(5, 0.5, 5, rng));
}

TEST_CASE("uniform candidates: inclusion frequency of each non-true class is q") {
    std::mt19937_64 rng(4);
    const double q = 0.6;
    const int n = 20000;
    std::vector<double> hits(5, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto c = gen_uniform_candidates(2, q, 5, rng);
        for (std::size_t s = 0; s < 5; ++s) hits[s] += c.contains(s) ? 1.0 : 0.0;
    }
    const double se = std::sqrt(q * (1 - q) / n);
    for (std::size_t s = 0; s < 5; ++s) {
        if (s == 2) {
            CHECK(hits[s] == n);
        } else {
            CHECK(std::abs(hits[s] / n - q) <= 5 * se);
        }
    }
}

TEST_CASE("default wheel geometry") {
    const auto w = EmotionWheel::default_wheel();
    REQUIRE(w.size() == 5);
    CHECK(w[1].name == "neutral");
    CHECK(w[1].radius == 0.0);
    CHECK(w[0].angle_deg == 27.0);
    CHECK(w[2].angle_deg == 207.0);
    CHECK(w[3].angle_deg == 117.0);
    CHECK(w[4].angle_deg == 153.0);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(emotion_distance(i, j, w) == doctest::Approx(cartesian_distance(w[i], w[j])).epsilon(1e-12));
        }
    }
}

TEST_CASE("similarity matrix: symmetric, unit diagonal, in [0, 1], known entries") {
    const auto w = EmotionWheel::default_wheel();
    const auto g = build_similarity(w);
    double dmax = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) dmax = std::max(dmax, cartesian_distance(w[i], w[j]));
    }
    CHECK(dmax == doctest::Approx(2.0));  // happy and sad sit opposite each other on the unit circle
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(g(i, i) == 1.0);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(g(i, j) == g(j, i));
            CHECK(g(i, j) >= 0.0);
            CHECK(g(i, j) <= 1.0);
            CHECK(g(i, j) == doctest::Approx(1.0 - cartesian_distance(w[i], w[j]) / dmax).epsilon(1e-12));
        }
    }
    CHECK(g(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g(0, 1) == doctest::Approx(0.5));
    // fear and disgust are 36 degrees apart
    CHECK(g(3, 4) == doctest::Approx(1.0 - std::sin(18.0 * std::numbers::pi / 180.0)));
}

TEST_CASE("wheel distance obeys the triangle inequality") {
    const auto w = EmotionWheel::default_wheel();
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            for (std::size_t l = 0; l < 5; ++l) {
                CHECK(emotion_distance(i, l, w) <= emotion_distance(i, j, w) + emotion_distance(j, l, w) + 1e-12);
            }
        }
    }
}

TEST_CASE("similarity candidates: inclusion frequency matches gamma") {
    const auto g = build_similarity(EmotionWheel::default_wheel());
    std::mt19937_64 rng(5);
    const int n = 20000;
    for (std::size_t y = 0; y < 5; ++y) {
        std::vector<double> hits(5, 0.0);
        for (int i = 0; i < n; ++i) {
            const auto c = gen_similarity_candidates(y, g, rng);
            for (std::size_t s = 0; s < 5; ++s) hits[s] += c.contains(s) ? 1.0 : 0.0;
        }
        for (std::size_t s = 0; s < 5; ++s) {
            const double p = s == y ? 1.0 : g(s, y);
            const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / n);
            CHECK(std::abs(hits[s] / n - p) <= 5 * se + 1e-12);
        }
    }
}

TEST_CASE("wheel file round-trip, hash stability, and bad files") {
    const auto w = EmotionWheel::default_wheel();
    const auto path = temp_path("wheel.txt");
    w.save(path);
    const auto r = EmotionWheel::load(path);
    CHECK(r.canonical() == w.canonical());
    CHECK(r.hash() == w.hash());
    auto pts = w.points();
    pts[0].angle_deg = 30.0;
    CHECK(EmotionWheel(pts).hash() != w.hash());
    const auto bad = temp_path("wheel_bad.txt");
    {
        std::ofstream out(bad);
        out << "# comment\nhappy 1\n";
    }
    CHECK_THROWS(EmotionWheel::load(bad));
}

TEST_CASE("uniformize") {
    const std::vector<std::uint8_t> m = {1, 0, 1, 1, 0};
    const auto u = uniformize(m);
    for (std::size_t s = 0; s < 5; ++s) CHECK(u[s] == doctest::Approx(m[s] ? 1.0 / 3.0 : 0.0));
    CHECK_THROWS(uniformize(std::vector<std::uint8_t>(5, 0)));
}

TEST_CASE("candidate file round-trip") {
    std::mt19937_64 rng(6);
    std::vector<CandidateSet> sets;
    for (int i = 0; i < 50; ++i) sets.push_back(gen_uniform_candidates(i % 5, 0.4, 5, rng));
    for (auto& s : sets) s.provenance = uniform_provenance(0.4);
    const auto path = temp_path("cands.csv");
    write_candidate_file(path, sets);
    CHECK(read_candidate_file(path) == sets);
}

TEST_CASE("candidate file without the true label is rejected") {
    const auto path = temp_path("cands_bad.csv");
    {
        std::ofstream out(path);
        out << "sample_id,truth,m0,m1,m2,m3,m4,provenance\n0,3,1,0,0,0,0,x\n";
    }
    CHECK_THROWS(read_candidate_file(path));
}

}  // TEST_SUITE
