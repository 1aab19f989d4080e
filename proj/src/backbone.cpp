#include "pll/backbone.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pll/text.hpp"

namespace pll {

void BackboneConfig::validate() const {
    if (features < 5) throw std::invalid_argument("backbone: need at least 5 input features");
    if (classes < 2) throw std::invalid_argument("backbone: need at least 2 classes");
    if (hidden == 0 || embedding_dim == 0 || conv1_channels == 0 || conv2_channels == 0) {
        throw std::invalid_argument("backbone: layer widths must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("backbone: dropout must lie in [0, 1)");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("backbone: slope must lie in (0, 1)");
}

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, nn::Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.values) v = dist(rng);
    return t;
}

}  // namespace

Backbone::Backbone(BackboneConfig config, std::uint64_t init_seed) : config_(config), init_seed_(init_seed) {
    config_.validate();
    nn::Rng rng(init_seed);
    const std::size_t c1 = config_.conv1_channels, c2 = config_.conv2_channels;
    const std::size_t emb = config_.embedding_size();
    auto& p = params_;
    slot_.conv1_w = p.add("conv1.weight", uniform_init({c1, 1, nn::kKernelWidth}, nn::kKernelWidth, rng));
    slot_.conv1_b = p.add("conv1.bias", Tensor({c1}));
    slot_.bn1_w = p.add("bn1.weight", Tensor({c1}, 1.0));
    slot_.bn1_b = p.add("bn1.bias", Tensor({c1}));
    slot_.bn1_mean = p.add("bn1.running_mean", Tensor({c1}), false);
    slot_.bn1_var = p.add("bn1.running_var", Tensor({c1}, 1.0), false);
    slot_.conv2_w = p.add("conv2.weight", uniform_init({c2, c1, nn::kKernelWidth}, c1 * nn::kKernelWidth, rng));
    slot_.conv2_b = p.add("conv2.bias", Tensor({c2}));
    slot_.bn2_w = p.add("bn2.weight", Tensor({c2}, 1.0));
    slot_.bn2_b = p.add("bn2.bias", Tensor({c2}));
    slot_.bn2_mean = p.add("bn2.running_mean", Tensor({c2}), false);
    slot_.bn2_var = p.add("bn2.running_var", Tensor({c2}, 1.0), false);
    slot_.fc1_w = p.add("fc1.weight", uniform_init({config_.hidden, emb}, emb, rng));
    slot_.fc1_b = p.add("fc1.bias", Tensor({config_.hidden}));
    slot_.fc2_w = p.add("fc2.weight", uniform_init({config_.classes, config_.hidden}, config_.hidden, rng));
    slot_.fc2_b = p.add("fc2.bias", Tensor({config_.classes}));
    slot_.proj_w = p.add("proj.weight", uniform_init({config_.embedding_dim, emb}, emb, rng));
    slot_.proj_b = p.add("proj.bias", Tensor({config_.embedding_dim}));
}

void Backbone::encode_into(ForwardTape& tape) const {
    const auto& p = params_;
    const double slope = config_.leaky_slope;
    tape.conv1 = nn::conv1d(tape.input, p[slot_.conv1_w], p[slot_.conv1_b]);
    if (tape.pass.batch_stats) {
        tape.bn1 = nn::batchnorm1d_train(tape.conv1, p[slot_.bn1_w], p[slot_.bn1_b], tape.bn1_cache);
    } else {
        tape.bn1 = nn::batchnorm1d_eval(tape.conv1, p[slot_.bn1_w], p[slot_.bn1_b], p[slot_.bn1_mean],
                                        p[slot_.bn1_var], tape.bn1_cache);
    }
    tape.act1 = nn::leaky_relu(tape.bn1, slope);
    tape.conv2 = nn::conv1d(tape.act1, p[slot_.conv2_w], p[slot_.conv2_b]);
    if (tape.pass.batch_stats) {
        tape.bn2 = nn::batchnorm1d_train(tape.conv2, p[slot_.bn2_w], p[slot_.bn2_b], tape.bn2_cache);
    } else {
        tape.bn2 = nn::batchnorm1d_eval(tape.conv2, p[slot_.bn2_w], p[slot_.bn2_b], p[slot_.bn2_mean],
                                        p[slot_.bn2_var], tape.bn2_cache);
    }
    tape.act2 = nn::leaky_relu(tape.bn2, slope);
    tape.embedding = tape.act2.reshaped({tape.batch, config_.embedding_size()});
}

void Backbone::classify_into(ForwardTape& tape, nn::Rng* rng) const {
    const auto& p = params_;
    tape.fc1 = nn::dense(tape.embedding, p[slot_.fc1_w], p[slot_.fc1_b]);
    tape.hidden = nn::leaky_relu(tape.fc1, config_.leaky_slope);
    tape.hidden_dropped = nn::dropout(tape.hidden, config_.dropout, tape.pass.dropout, rng, tape.dropout_mask);
    tape.logits = nn::dense(tape.hidden_dropped, p[slot_.fc2_w], p[slot_.fc2_b]);
}

void Backbone::project_into(ForwardTape& tape) const {
    tape.projection_raw = nn::dense(tape.embedding, params_[slot_.proj_w], params_[slot_.proj_b]);
    tape.projection = nn::l2_normalize_rows(tape.projection_raw);
}

ForwardTape Backbone::forward(const Tensor& batch, PassConfig pass, nn::Rng* rng) const {
    require_rank(batch, 2, "backbone input");
    if (batch.dim(1) != config_.features) {
        throw ShapeError("backbone: expected " + std::to_string(config_.features) + " features, got shape " +
                         shape_string(batch.shape));
    }
    ForwardTape tape;
    tape.pass = pass;
    tape.batch = batch.dim(0);
    tape.input = batch.reshaped({tape.batch, 1, config_.features});
    encode_into(tape);
    classify_into(tape, rng);
    if (pass.project) project_into(tape);
    tape.complete = true;
    return tape;
}

void Backbone::backward(const ForwardTape& tape, const Tensor& grad_logits, const Tensor* grad_projection,
                        GradientSet& grads) const {
    if (!tape.complete) throw std::logic_error("backward: no completed forward pass on this tape");
    if (!grads.congruent(params_)) throw ShapeError("backward: gradient set does not match the parameters");
    require_shape(grad_logits, tape.logits.shape, "backward grad_logits");
    const auto& p = params_;
    const double slope = config_.leaky_slope;

    // classifier
    Tensor d_hidden_dropped =
        nn::dense_backward(tape.hidden_dropped, p[slot_.fc2_w], grad_logits, grads[slot_.fc2_w], grads[slot_.fc2_b], true);
    Tensor d_hidden(d_hidden_dropped.shape);
    for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] = d_hidden_dropped[i] * tape.dropout_mask[i];
    const Tensor d_fc1 = nn::leaky_relu_backward(tape.fc1, d_hidden, slope);
    Tensor d_embedding =
        nn::dense_backward(tape.embedding, p[slot_.fc1_w], d_fc1, grads[slot_.fc1_w], grads[slot_.fc1_b], true);

    // projection head
    if (grad_projection != nullptr) {
        if (!tape.pass.project) throw std::logic_error("backward: projection gradient without a projection pass");
        require_shape(*grad_projection, tape.projection.shape, "backward grad_projection");
        const Tensor d_raw = nn::l2_normalize_rows_backward(tape.projection_raw, tape.projection, *grad_projection);
        const Tensor d_emb_proj =
            nn::dense_backward(tape.embedding, p[slot_.proj_w], d_raw, grads[slot_.proj_w], grads[slot_.proj_b], true);
        for (std::size_t i = 0; i < d_embedding.size(); ++i) d_embedding[i] += d_emb_proj[i];
    }

    // encoder
    const Tensor d_act2 = d_embedding.reshaped(tape.act2.shape);
    const Tensor d_bn2 = nn::leaky_relu_backward(tape.bn2, d_act2, slope);
    const Tensor d_conv2 = nn::batchnorm1d_backward(tape.bn2_cache, p[slot_.bn2_w], d_bn2, grads[slot_.bn2_w], grads[slot_.bn2_b]);
    const Tensor d_act1 =
        nn::conv1d_backward(tape.act1, p[slot_.conv2_w], d_conv2, grads[slot_.conv2_w], grads[slot_.conv2_b], true);
    const Tensor d_bn1 = nn::leaky_relu_backward(tape.bn1, d_act1, slope);
    const Tensor d_conv1 = nn::batchnorm1d_backward(tape.bn1_cache, p[slot_.bn1_w], d_bn1, grads[slot_.bn1_w], grads[slot_.bn1_b]);
    nn::conv1d_backward(tape.input, p[slot_.conv1_w], d_conv1, grads[slot_.conv1_w], grads[slot_.conv1_b], false);
}

GradientSet Backbone::backward(const ForwardTape& tape, const Tensor& grad_logits, const Tensor* grad_projection) const {
    GradientSet grads(params_);
    backward(tape, grad_logits, grad_projection, grads);
    return grads;
}

void Backbone::update_running_stats(const ForwardTape& tape) {
    if (!tape.complete || !tape.pass.batch_stats) return;
    nn::batchnorm1d_update_running(tape.bn1_cache, tape.batch * tape.conv1.dim(2), params_[slot_.bn1_mean],
                                   params_[slot_.bn1_var]);
    nn::batchnorm1d_update_running(tape.bn2_cache, tape.batch * tape.conv2.dim(2), params_[slot_.bn2_mean],
                                   params_[slot_.bn2_var]);
}

Tensor Backbone::encode(const Tensor& batch, PassConfig pass) const {
    require_rank(batch, 2, "encode input");
    if (batch.dim(1) != config_.features) {
        throw ShapeError("encode: expected " + std::to_string(config_.features) + " features, got shape " +
                         shape_string(batch.shape));
    }
    ForwardTape tape;
    tape.pass = pass;
    tape.batch = batch.dim(0);
    tape.input = batch.reshaped({tape.batch, 1, config_.features});
    encode_into(tape);
    return tape.embedding;
}

Tensor Backbone::classify(const Tensor& embedding, PassConfig pass, nn::Rng* rng) const {
    require_rank(embedding, 2, "classify input");
    if (embedding.dim(1) != config_.embedding_size()) {
        throw ShapeError("classify: expected embedding size " + std::to_string(config_.embedding_size()) +
                         ", got shape " + shape_string(embedding.shape));
    }
    ForwardTape tape;
    tape.pass = pass;
    tape.batch = embedding.dim(0);
    tape.embedding = embedding;
    classify_into(tape, rng);
    return tape.logits;
}

Tensor Backbone::project(const Tensor& embedding) const {
    require_rank(embedding, 2, "project input");
    if (embedding.dim(1) != config_.embedding_size()) {
        throw ShapeError("project: expected embedding size " + std::to_string(config_.embedding_size()) +
                         ", got shape " + shape_string(embedding.shape));
    }
    ForwardTape tape;
    tape.batch = embedding.dim(0);
    tape.embedding = embedding;
    project_into(tape);
    return tape.projection;
}

std::vector<std::size_t> Backbone::predict(const Tensor& batch) const {
    const ForwardTape tape = forward(batch, PassConfig::eval());
    std::vector<std::size_t> out(tape.batch);
    const std::size_t k = config_.classes;
    for (std::size_t b = 0; b < tape.batch; ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (tape.logits[b * k + c] > tape.logits[b * k + best]) best = c;
        }
        out[b] = best;
    }
    return out;
}

void momentum_update(const ParameterSet& query, ParameterSet& key, double momentum) {
    if (!query.congruent(key)) throw ShapeError("momentum_update: query and key layouts differ");
    if (momentum < 0.0 || momentum > 1.0) throw std::invalid_argument("momentum_update: coefficient must lie in [0, 1]");
    for (std::size_t i = 0; i < key.size(); ++i) {
        Tensor& k = key[i];
        const Tensor& q = query[i];
        for (std::size_t j = 0; j < k.size(); ++j) k[j] = momentum * k[j] + (1.0 - momentum) * q[j];
    }
}

QueryKeyPair::QueryKeyPair(const Backbone& q, double m) : query(q), key(q), momentum(m) {
    if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("key momentum must lie in (0, 1)");
}

void QueryKeyPair::momentum_update() { pll::momentum_update(query.params(), key.params(), momentum); }

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "pllkit-checkpoint";

std::map<std::string, std::string> config_fields(const BackboneConfig& c, std::uint64_t seed) {
    return {{"features", std::to_string(c.features)},
            {"classes", std::to_string(c.classes)},
            {"hidden", std::to_string(c.hidden)},
            {"embedding_dim", std::to_string(c.embedding_dim)},
            {"conv1_channels", std::to_string(c.conv1_channels)},
            {"conv2_channels", std::to_string(c.conv2_channels)},
            {"dropout", text::format_double(c.dropout)},
            {"leaky_slope", text::format_double(c.leaky_slope)},
            {"init_seed", std::to_string(seed)}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Backbone& model,
                     const std::map<std::string, std::string>& extra) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << kCheckpointMagic << " 1\n";
    out << "config";
    for (const auto& [k, v] : config_fields(model.config(), model.init_seed())) out << ' ' << k << '=' << v;
    out << '\n';
    if (!extra.empty()) {
        out << "extra";
        for (const auto& [k, v] : extra) {
            if (k.find_first_of(" =\n") != std::string::npos || v.find_first_of(" \n") != std::string::npos) {
                throw std::invalid_argument("checkpoint extra fields may not contain spaces: " + k);
            }
            out << ' ' << k << '=' << v;
        }
        out << '\n';
    }
    for (const auto& e : model.params().entries()) {
        out << "tensor " << e.name << ' ' << (e.trainable ? 1 : 0) << ' ' << e.value.rank();
        for (std::size_t d : e.value.shape) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            if (i) out << ' ';
            out << text::format_double(e.value[i]);
        }
        out << '\n';
    }
    out << "end\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    Checkpoint ckpt;
    std::string line;
    auto fail = [&](const std::string& why) { throw std::runtime_error(path.string() + ": " + why); };

    if (!std::getline(in, line) || line != std::string(kCheckpointMagic) + " 1") fail("not a checkpoint file");
    auto parse_fields = [](const std::string& l) {
        std::map<std::string, std::string> kv;
        std::istringstream ss(l);
        std::string tok;
        ss >> tok;  // tag
        while (ss >> tok) {
            const auto eq = tok.find('=');
            if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        return kv;
    };
    bool saw_config = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            if (!saw_config) fail("missing config line");
            return ckpt;
        }
        if (line.rfind("config ", 0) == 0) {
            auto kv = parse_fields(line);
            try {
                ckpt.config.features = std::stoul(kv.at("features"));
                ckpt.config.classes = std::stoul(kv.at("classes"));
                ckpt.config.hidden = std::stoul(kv.at("hidden"));
                ckpt.config.embedding_dim = std::stoul(kv.at("embedding_dim"));
                ckpt.config.conv1_channels = std::stoul(kv.at("conv1_channels"));
                ckpt.config.conv2_channels = std::stoul(kv.at("conv2_channels"));
                ckpt.config.dropout = text::parse_double(kv.at("dropout"));
                ckpt.config.leaky_slope = text::parse_double(kv.at("leaky_slope"));
                ckpt.init_seed = std::stoull(kv.at("init_seed"));
            } catch (const std::out_of_range&) {
                fail("incomplete config line");
            }
            saw_config = true;
        } else if (line.rfind("extra ", 0) == 0) {
            ckpt.extra = parse_fields(line);
        } else if (line.rfind("tensor ", 0) == 0) {
            std::istringstream ss(line);
            std::string tag, name;
            int trainable = 0;
            std::size_t rank = 0;
            ss >> tag >> name >> trainable >> rank;
            Shape shape(rank);
            for (auto& d : shape) ss >> d;
            if (!ss) fail("bad tensor header: " + line);
            if (!std::getline(in, line)) fail("missing values for " + name);
            Tensor t(shape);
            std::size_t i = 0;
            for (const auto& tok : text::split(line, ' ')) {
                if (tok.empty()) continue;
                if (i >= t.size()) fail("too many values for " + name);
                t[i++] = text::parse_double(tok);
            }
            if (i != t.size()) fail("too few values for " + name);
            ckpt.params.add(name, std::move(t), trainable != 0);
        } else {
            fail("unexpected line: " + line);
        }
    }
    fail("missing end marker");
    return ckpt;
}

Backbone restore_backbone(const Checkpoint& ckpt) {
    Backbone model(ckpt.config, ckpt.init_seed);
    if (!model.params().congruent(ckpt.params)) {
        throw std::runtime_error("checkpoint parameters do not match its config");
    }
    model.params() = ckpt.params;
    return model;
}

std::uint64_t kink_signature(const ForwardTape& tape, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (const Tensor* t : {&tape.bn1, &tape.bn2, &tape.fc1}) {
        for (double v : t->values) {
            h ^= v > 0.0 ? 1u : 0u;
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace pll
