#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pll/backbone.hpp"
#include "pll/gradcheck.hpp"
#include "pll/methods.hpp"

using namespace pll;

namespace {

Tensor random_batch(std::size_t b, std::size_t s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t({b, s});
    for (auto& v : t.values) v = u(rng);
    return t;
}

BackboneConfig small_config(std::size_t s = 12) {
    BackboneConfig c;
    c.features = s;
    c.hidden = 6;
    c.embedding_dim = 4;
    return c;
}

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "pllkit_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("layer shapes for a 310-feature input") {
    Backbone m(BackboneConfig{}, 1);
    const auto x = random_batch(8, 310, 2);
    const auto tape = m.forward(x, PassConfig::eval(true));
    CHECK(tape.input.shape == Shape{8, 1, 310});
    CHECK(tape.conv1.shape == Shape{8, 5, 308});
    CHECK(tape.act1.shape == Shape{8, 5, 308});
    CHECK(tape.conv2.shape == Shape{8, 10, 306});
    CHECK(tape.embedding.shape == Shape{8, 3060});
    CHECK(tape.hidden.shape == Shape{8, 64});
    CHECK(tape.logits.shape == Shape{8, 5});
    CHECK(tape.projection.shape == Shape{8, 64});
}

TEST_CASE("embedding size is 10(s-4)") {
    BackboneConfig c;
    c.features = 5;
    CHECK(c.embedding_size() == 10);
    Backbone m(c, 3);
    CHECK(m.encode(random_batch(2, 5, 3)).shape == Shape{2, 10});
    c.features = 4;
    CHECK_THROWS(c.validate());
}

TEST_CASE("wrong feature count is a shape error") {
    Backbone m(small_config(), 1);
    CHECK_THROWS_AS(m.forward(Tensor({2, 11}), PassConfig::eval()), ShapeError);
    CHECK_THROWS_AS(m.classify(Tensor({2, 7})), ShapeError);
}

TEST_CASE("zero input in eval mode gives a zero embedding (zero biases at init)") {
    Backbone m(BackboneConfig{}, 4);
    const auto e = m.encode(Tensor({3, 310}));
    for (double v : e.values) CHECK(v == 0.0);
}

TEST_CASE("projection rows are unit-norm and scale-invariant in the pre-normalization output") {
    Backbone m(small_config(), 5);
    const auto x = random_batch(4, 12, 6);
    const auto e = m.encode(x);
    const auto p = m.project(e);
    for (std::size_t b = 0; b < 4; ++b) {
        double n = 0.0;
        for (double v : p.row(b)) n += v * v;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-6);
    }
    // scaling the projection weights and bias by c scales the raw output by c
    Backbone scaled = m;
    for (auto& v : scaled.params().at("proj.weight").values) v *= 3.7;
    for (auto& v : scaled.params().at("proj.bias").values) v *= 3.7;
    const auto p2 = scaled.project(e);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p2[i] == doctest::Approx(p[i]).epsilon(1e-12));
}

TEST_CASE("same seed gives the same initialization, different seeds differ") {
    Backbone a(small_config(), 7), b(small_config(), 7), c(small_config(), 8);
    CHECK(a.params() == b.params());
    CHECK_FALSE(a.params() == c.params());
}

TEST_CASE("eval forward is deterministic and predict is the logit argmax") {
    Backbone m(small_config(), 9);
    const auto x = random_batch(6, 12, 10);
    const auto t1 = m.forward(x, PassConfig::eval());
    const auto t2 = m.forward(x, PassConfig::eval());
    CHECK(t1.logits == t2.logits);
    const auto pred = m.predict(x);
    for (std::size_t b = 0; b < 6; ++b) {
        std::size_t best = 0;
        for (std::size_t s = 1; s < 5; ++s) {
            if (t1.logits[b * 5 + s] > t1.logits[b * 5 + best]) best = s;
        }
        CHECK(pred[b] == best);
    }
}

TEST_CASE("train forward needs an rng for dropout") {
    Backbone m(small_config(), 11);
    CHECK_THROWS(m.forward(random_batch(4, 12, 1), PassConfig::train()));
}

TEST_CASE("backward without a completed forward is rejected") {
    Backbone m(small_config(), 12);
    ForwardTape empty;
    CHECK_THROWS_AS(m.backward(empty, Tensor({2, 5})), std::logic_error);
    const auto tape = m.forward(random_batch(2, 12, 2), PassConfig::eval(false));
    Tensor gp({2, 4});
    CHECK_THROWS_AS(m.backward(tape, Tensor({2, 5}), &gp), std::logic_error);
}

TEST_CASE("a loss that ignores the logits yields zero gradients") {
    Backbone m(small_config(), 13);
    const auto tape = m.forward(random_batch(3, 12, 3), PassConfig::deterministic_train(true));
    const auto g = m.backward(tape, Tensor({3, 5}), nullptr);
    for (std::size_t e = 0; e < g.size(); ++e) {
        for (double v : g[e].values) CHECK(v == 0.0);
    }
}

TEST_CASE("fc2 gradient of cross-entropy equals (softmax - onehot) outer hidden, batch-averaged") {
    Backbone m(small_config(), 14);
    const auto x = random_batch(3, 12, 4);
    const auto tape = m.forward(x, PassConfig::eval());
    const std::vector<std::size_t> y = {0, 3, 1};
    const auto lg = supervised_ce_loss(tape.logits, y);
    const auto g = m.backward(tape, lg.grad_logits);
    const auto& w = g[m.params().index_of("fc2.weight")];
    const std::size_t h = 6;
    for (std::size_t o = 0; o < 5; ++o) {
        for (std::size_t j = 0; j < h; ++j) {
            double want = 0.0;
            for (std::size_t b = 0; b < 3; ++b) {
                const auto p = nn::softmax(tape.logits.row(b));
                want += (p[o] - (o == y[b] ? 1.0 : 0.0)) * tape.hidden_dropped[b * h + j] / 3.0;
            }
            CHECK(w[o * h + j] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("full backward agrees with finite differences in both batch-norm modes with projection") {
    for (bool batch_stats : {false, true}) {
        Backbone m(small_config(), 15);
        std::mt19937_64 rng(16);
        std::uniform_real_distribution<double> u(0.5, 1.5);
        for (const char* n : {"bn1.weight", "bn2.weight", "bn1.running_var", "bn2.running_var"}) {
            for (auto& v : m.params().at(n).values) v = u(rng);
        }
        const auto x = random_batch(4, 12, 17);
        Tensor gl({4, 5}), gp({4, 4});
        std::normal_distribution<double> nrm(0.0, 1.0);
        for (auto& v : gl.values) v = nrm(rng);
        for (auto& v : gp.values) v = nrm(rng);
        const PassConfig pass{batch_stats, false, true};
        Backbone work = m;
        const Objective f = [&](const ParameterSet& ps, bool grad) {
            work.params() = ps;
            const auto t = work.forward(x, pass);
            LossEval ev;
            for (std::size_t i = 0; i < gl.size(); ++i) ev.value += gl[i] * t.logits[i];
            for (std::size_t i = 0; i < gp.size(); ++i) ev.value += gp[i] * t.projection[i];
            if (grad) ev.grads = work.backward(t, gl, &gp);
            return ev;
        };
        const auto rep = gradcheck(f, m.params(), {1e-5, 0, 0});
        CAPTURE(batch_stats);
        CAPTURE(rep.worst_entry);
        CHECK(rep.max_rel_error <= 1e-6);
    }
}

TEST_CASE("running statistics follow the batch statistics of the tape") {
    Backbone m(small_config(), 18);
    const auto x = random_batch(4, 12, 19);
    const auto tape = m.forward(x, PassConfig::deterministic_train());
    m.update_running_stats(tape);
    const auto& rm = m.params().at("bn1.running_mean");
    for (std::size_t c = 0; c < 5; ++c) {
        double mean = 0.0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t t = 0; t < 10; ++t) mean += tape.conv1[(b * 5 + c) * 10 + t];
        }
        mean /= 40.0;
        CHECK(rm[c] == doctest::Approx(0.1 * mean).epsilon(1e-12));
    }
    // an eval tape carries no batch statistics
    const auto before = m.params();
    m.update_running_stats(m.forward(x, PassConfig::eval()));
    CHECK(m.params() == before);
}

TEST_CASE("momentum update: recurrence, and m = 0 copies the query") {
    Backbone q(small_config(), 20), k(small_config(), 21);
    const auto k0 = k.params();
    momentum_update(q.params(), k.params(), 0.9);
    for (std::size_t e = 0; e < k0.size(); ++e) {
        for (std::size_t i = 0; i < k0[e].size(); ++i) {
            CHECK(k.params()[e][i] == doctest::Approx(0.9 * k0[e][i] + 0.1 * q.params()[e][i]).epsilon(1e-14));
        }
    }
    momentum_update(q.params(), k.params(), 0.0);
    CHECK(k.params() == q.params());
    CHECK_THROWS(momentum_update(q.params(), k.params(), 1.5));
}

TEST_CASE("query/key pair starts equal and moves slowly") {
    Backbone q(small_config(), 22);
    QueryKeyPair pair(q, 0.999);
    CHECK(pair.key.params() == pair.query.params());
    for (auto& v : pair.query.params().at("fc2.bias").values) v += 1.0;
    pair.momentum_update();
    for (double v : pair.key.params().at("fc2.bias").values) CHECK(v == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Backbone m(small_config(), 23);
    std::mt19937_64 rng(24);
    std::normal_distribution<double> nrm(0.0, 1.0);
    for (auto& v : m.params().at("fc1.weight").values) v = nrm(rng) * 1e-3;
    m.params().at("bn2.running_var")[0] = 1.0 / 3.0;
    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(path, m, {{"seed", "23"}, {"method", "dnpl"}});
    const auto ck = load_checkpoint(path);
    CHECK(ck.config == m.config());
    CHECK(ck.init_seed == 23);
    CHECK(ck.extra.at("method") == "dnpl");
    const auto r = restore_backbone(ck);
    CHECK(r.params() == m.params());
    const auto x = random_batch(2, 12, 25);
    CHECK(r.forward(x, PassConfig::eval()).logits == m.forward(x, PassConfig::eval()).logits);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto path = temp_path("bad.ckpt");
    {
        std::ofstream out(path);
        out << "pllkit-checkpoint 1\nconfig features=12\n";
    }
    CHECK_THROWS(load_checkpoint(path));
    CHECK_THROWS(load_checkpoint(temp_path("missing.ckpt")));
}

}  // TEST_SUITE
