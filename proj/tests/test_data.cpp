#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>

#include "pll/data.hpp"
#include "pll/text.hpp"

using namespace pll;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "pllkit_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

// Nearest-class-mean probe fitted on the training folds of one subject, scored on its test fold.
double centroid_probe(const Dataset& data, int subject, int test_fold) {
    const auto folds = assign_folds(data);
    const auto split = split_subject(data, folds, subject, test_fold);
    const std::size_t s = data.feature_count;
    std::vector<std::vector<double>> mean(5, std::vector<double>(s, 0.0));
    std::vector<double> count(5, 0.0);
    for (auto i : split.train) {
        const auto& smp = data.samples[i];
        for (std::size_t f = 0; f < s; ++f) mean[smp.label][f] += smp.features[f];
        count[smp.label] += 1.0;
    }
    for (std::size_t c = 0; c < 5; ++c) {
        for (auto& v : mean[c]) v /= count[c];
    }
    std::size_t correct = 0;
    for (auto i : split.test) {
        const auto& smp = data.samples[i];
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 5; ++c) {
            double d = 0.0;
            for (std::size_t f = 0; f < s; ++f) d += std::pow(smp.features[f] - mean[c][f], 2);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        correct += best == smp.label ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(split.test.size());
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("default synthetic config: 45 trials per subject, balanced classes, features in [0, 1]") {
    SynthConfig c;
    c.segments = 4;
    const auto d = synth_generate(c);
    CHECK(d.size() == 45u * 4u);
    CHECK(d.feature_count == 310);
    std::vector<std::size_t> hist(5, 0);
    std::set<std::pair<int, int>> trials;
    for (const auto& s : d.samples) {
        ++hist[s.label];
        trials.insert({s.session, s.trial});
        CHECK(s.label == trial_class(s.session, s.trial));
        for (double v : s.features) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(trials.size() == 45);
    for (auto h : hist) CHECK(h == 36);
}

TEST_CASE("trial classes: every fold holds each class once per session") {
    for (int session = 1; session <= 3; ++session) {
        for (int fold = 1; fold <= 3; ++fold) {
            std::set<std::size_t> seen;
            for (int t = 5 * (fold - 1) + 1; t <= 5 * fold; ++t) seen.insert(trial_class(session, t));
            CHECK(seen.size() == 5);
        }
    }
}

TEST_CASE("synthetic generation is bit-reproducible from the config") {
    SynthConfig c;
    c.segments = 3;
    c.subjects = 2;
    c.seed = 11;
    CHECK(synth_generate(c) == synth_generate(c));
    CHECK(synth_generate(c).fingerprint() == synth_generate(c).fingerprint());
    auto c2 = c;
    c2.seed = 12;
    CHECK(synth_generate(c).fingerprint() != synth_generate(c2).fingerprint());
}

TEST_CASE("synthetic config echo round-trip and validation") {
    SynthConfig c;
    c.subjects = 3;
    c.separation = 0.25;
    c.seed = 99;
    const auto kv = c.to_key_values();
    CHECK(kv.at("seed") == "99");
    const auto r = SynthConfig::from_key_values(kv);
    CHECK(r.subjects == 3);
    CHECK(r.separation == 0.25);
    CHECK(r.seed == 99);
    c.noise = 0.0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("dataset file round-trip is bit-identical") {
    SynthConfig c;
    c.segments = 2;
    const auto d = synth_generate(c);
    const auto path = temp_path("roundtrip.csv");
    save_dataset(path, d);
    const auto r = load_dataset(path);
    CHECK(r == d);
    CHECK(r.fingerprint() == d.fingerprint());
}

TEST_CASE("handcrafted 3-row file parses field by field") {
    const auto path = temp_path("fixture.csv");
    {
        std::ofstream out(path);
        out << "subject,session,trial,segment,label,f000,f001\n"
            << "1,1,1,1,0,0.25,1.5\n"
            << "2,3,15,7,4,-3,0\r\n"
            << "\n"
            << "10,2,8,2,2,1e-3,0.5\n";
    }
    const auto d = load_dataset(path);
    REQUIRE(d.size() == 3);
    CHECK(d.feature_count == 2);
    CHECK(d.samples[0] == Sample{1, 1, 1, 1, 0, {0.25, 1.5}});
    CHECK(d.samples[1] == Sample{2, 3, 15, 7, 4, {-3.0, 0.0}});
    CHECK(d.samples[2] == Sample{10, 2, 8, 2, 2, {1e-3, 0.5}});
    CHECK(d.subjects() == std::vector<int>{1, 2, 10});
    CHECK(d.subject_indices(2) == std::vector<std::size_t>{1});
}

TEST_CASE("label 7 is rejected at the offending row") {
    const auto path = temp_path("label7.csv");
    {
        std::ofstream out(path);
        out << "subject,session,trial,segment,label,f000\n1,1,1,1,0,0.5\n1,1,2,1,7,0.5\n";
    }
    const auto msg = message_of([&] { load_dataset(path); });
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("label 7") != std::string::npos);
}

TEST_CASE("malformed files are rejected with a row number") {
    auto write = [](const std::string& name, const std::string& body) {
        const auto p = temp_path(name);
        std::ofstream(p) << body;
        return p;
    };
    const std::string header = "subject,session,trial,segment,label,f000\n";
    CHECK(message_of([&] { load_dataset(write("short.csv", header + "1,1,1,1,0\n")); }).find("row 1") !=
          std::string::npos);
    CHECK(message_of([&] { load_dataset(write("nan.csv", header + "1,1,1,1,0,0.5\n1,1,1,2,0,nan\n")); })
              .find("row 2") != std::string::npos);
    CHECK(message_of([&] { load_dataset(write("word.csv", header + "1,1,x,1,0,0.5\n")); }).find("row 1") !=
          std::string::npos);
    CHECK(message_of([&] { load_dataset(write("zero.csv", header + "1,0,1,1,0,0.5\n")); }).find("row 1") !=
          std::string::npos);
    CHECK_THROWS(load_dataset(write("badhead.csv", "subj,session,trial,segment,label,f000\n")));
    CHECK_THROWS(load_dataset(temp_path("does_not_exist.csv")));
}

TEST_CASE("folds: trial 7 is fold 2, 15 trials per fold, partition") {
    CHECK(fold_of_trial(7) == 2);
    CHECK(fold_of_trial(1) == 1);
    CHECK(fold_of_trial(5) == 1);
    CHECK(fold_of_trial(11) == 3);
    CHECK_THROWS(fold_of_trial(16));
    SynthConfig c;
    c.segments = 2;
    const auto d = synth_generate(c);
    const auto folds = assign_folds(d);
    std::vector<std::set<std::pair<int, int>>> trials(4);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& s = d.samples[i];
        trials[static_cast<std::size_t>(folds[i])].insert({s.session, s.trial});
        if (s.session == 2 && s.trial == 7) CHECK(folds[i] == 2);
    }
    for (int f = 1; f <= 3; ++f) CHECK(trials[f].size() == 15);
    for (int a = 1; a <= 3; ++a) {
        for (int b = a + 1; b <= 3; ++b) {
            std::vector<std::pair<int, int>> both;
            std::set_intersection(trials[a].begin(), trials[a].end(), trials[b].begin(), trials[b].end(),
                                  std::back_inserter(both));
            CHECK(both.empty());
        }
    }
    for (int test = 1; test <= 3; ++test) {
        const auto sp = split_subject(d, folds, 1, test);
        CHECK(sp.train.size() + sp.test.size() == d.size());
        CHECK(sp.test.size() == 15u * 2u);
        for (auto i : sp.test) CHECK(folds[i] == test);
        for (auto i : sp.train) CHECK(folds[i] != test);
    }
}

TEST_CASE("a session with a missing trial is rejected") {
    SynthConfig c;
    c.segments = 1;
    auto d = synth_generate(c);
    d.samples.erase(std::remove_if(d.samples.begin(), d.samples.end(),
                                   [](const Sample& s) { return s.session == 3 && s.trial == 9; }),
                    d.samples.end());
    CHECK_THROWS(assign_folds(d));
}

TEST_CASE("min-max scaling: identity on [0,1] columns, constant columns to 0, affine oracle") {
    Dataset d;
    d.feature_count = 3;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-4.0, 9.0);
    for (int i = 0; i < 20; ++i) {
        Sample s;
        s.features = {i == 0 ? 0.0 : (i == 1 ? 1.0 : 0.05 * (i % 19)), 3.25, u(rng)};
        d.samples.push_back(s);
    }
    std::vector<std::size_t> rows(20);
    std::iota(rows.begin(), rows.end(), 0);
    const auto mm = MinMax::fit(d, rows);
    double lo = 1e300, hi = -1e300;
    for (const auto& s : d.samples) {
        lo = std::min(lo, s.features[2]);
        hi = std::max(hi, s.features[2]);
    }
    for (const auto& s : d.samples) {
        const auto y = mm.apply(s.features);
        CHECK(y[0] == doctest::Approx(s.features[0]).epsilon(1e-15));
        CHECK(y[1] == 0.0);
        CHECK(y[2] == doctest::Approx((s.features[2] - lo) / (hi - lo)).epsilon(1e-14));
    }
    // unseen values are clipped
    const auto clipped = mm.apply(std::vector<double>{2.0, 7.0, hi + 100.0});
    CHECK(clipped == std::vector<double>{1.0, 0.0, 1.0});
}

TEST_CASE("normalization statistics come from the training rows only") {
    SynthConfig c;
    c.segments = 2;
    auto d = synth_generate(c);
    const auto folds = assign_folds(d);
    const auto sp = split_subject(d, folds, 1, 2);
    const auto mm = MinMax::fit(d, sp.train);
    auto perturbed = d;
    for (auto i : sp.test) {
        for (auto& v : perturbed.samples[i].features) v = v * 50.0 - 20.0;
    }
    const auto mm2 = MinMax::fit(perturbed, sp.train);
    CHECK(mm.lo == mm2.lo);
    CHECK(mm.hi == mm2.hi);
    for (auto i : sp.train) CHECK(mm.apply(d.samples[i].features) == mm2.apply(perturbed.samples[i].features));
}

TEST_CASE("separation 0: a held-out nearest-centroid probe sits at chance") {
    SynthConfig c;
    c.subjects = 4;
    c.separation = 0.0;
    c.seed = 3;
    const auto d = synth_generate(c);
    double acc = 0.0;
    for (int subject = 1; subject <= 4; ++subject) acc += centroid_probe(d, subject, 1);
    acc /= 4.0;
    CHECK(std::abs(acc - 20.0) <= 5.0);
}

TEST_CASE("high separation: a held-out nearest-centroid probe scores at least 95%") {
    SynthConfig c;
    c.separation = 1.0;  // class means ~7 noise standard deviations apart over 310 features
    c.seed = 4;
    const auto d = synth_generate(c);
    for (int fold = 1; fold <= 3; ++fold) CHECK(centroid_probe(d, 1, fold) >= 95.0);
}

}  // TEST_SUITE
