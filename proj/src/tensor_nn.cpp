#include "bandloc/tensor_nn.hpp"

#include "bandloc/serial.hpp"

#include <nlohmann/json.hpp>

namespace bandloc::nn {

using json = nlohmann::json;

std::string activation_name(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    }
    throw std::logic_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    throw std::invalid_argument("unknown activation: " + name);
}

size_t MlpModel::parameter_count() const {
    size_t n = 0;
    for (const DenseLayer& l : layers)
        n += static_cast<size_t>(l.weights.size()) + static_cast<size_t>(l.bias.size());
    return n;
}

void MlpModel::validate() const {
    if (layers.empty())
        throw std::invalid_argument("MlpModel: no layers");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("MlpModel: dropout_rate must be in [0,1)");
    for (size_t i = 0; i < layers.size(); ++i) {
        const DenseLayer& l = layers[i];
        if (l.bias.size() != l.weights.rows())
            throw std::invalid_argument("MlpModel: bias/weight shape mismatch");
        if (i > 0 && l.in_dim() != layers[i - 1].out_dim())
            throw std::invalid_argument("MlpModel: adjacent layer shapes do not chain");
        if (!l.weights.allFinite() || !l.bias.allFinite())
            throw std::invalid_argument("MlpModel: non-finite parameters");
    }
}

MlpModel make_mlp(const std::vector<int>& dims, Activation hidden_act,
                  Activation output_act, double dropout_rate, Rng& rng,
                  double leaky_slope) {
    if (dims.size() < 2)
        throw std::invalid_argument("make_mlp: need at least input and output dims");

    MlpModel model;
    model.dropout_rate = dropout_rate;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer layer;
        const int in = dims[i], out = dims[i + 1];
        if (in <= 0 || out <= 0)
            throw std::invalid_argument("make_mlp: non-positive layer width");
        const bool last = (i + 2 == dims.size());
        layer.activation = last ? output_act : hidden_act;
        layer.leaky_slope = leaky_slope;
        // He-uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in))
        double limit = std::sqrt(6.0 / static_cast<double>(in));
        layer.weights.resize(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c)
                layer.weights(r, c) = rng.uniform(-limit, limit);
        layer.bias = Eigen::VectorXd::Zero(out);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace {

void apply_activation(Eigen::MatrixXd& z, Activation act, double slope) {
    switch (act) {
    case Activation::identity:
        return;
    case Activation::relu:
        z = z.cwiseMax(0.0);
        return;
    case Activation::leaky_relu:
        z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
        return;
    }
}

// Derivative w.r.t. the pre-activation, evaluated from the stored pre-activation.
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre, Activation act, double slope) {
    switch (act) {
    case Activation::identity:
        return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::relu:
        return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::leaky_relu:
        return pre.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    }
    throw std::logic_error("unknown activation");
}

} // namespace

Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& input,
                        ForwardCache* cache, Rng* rng) {
    model.validate();
    if (input.rows() != model.input_dim())
        throw std::invalid_argument("forward: input dim " + std::to_string(input.rows()) +
                                    " != model input dim " +
                                    std::to_string(model.input_dim()));

    const bool training = model.mode == RunMode::train;
    const bool use_dropout = training && model.dropout_rate > 0.0;
    if (use_dropout && rng == nullptr)
        throw std::invalid_argument("forward: train mode with dropout needs an rng");

    if (cache) {
        cache->input = input;
        cache->pre_act.clear();
        cache->post_act.clear();
        cache->dropout_mask.clear();
        cache->layer_count = model.layers.size();
    }

    Eigen::MatrixXd a = input;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const DenseLayer& layer = model.layers[i];
        Eigen::MatrixXd z = layer.weights * a;
        z.colwise() += layer.bias;
        if (cache)
            cache->pre_act.push_back(z);

        apply_activation(z, layer.activation, layer.leaky_slope);

        const bool hidden = (i + 1 < model.layers.size());
        Eigen::MatrixXd mask;
        if (use_dropout && hidden) {
            // inverted dropout: keep with prob 1-p, scale kept units by 1/(1-p)
            const double keep = 1.0 - model.dropout_rate;
            mask.resize(z.rows(), z.cols());
            for (Eigen::Index c = 0; c < z.cols(); ++c)
                for (Eigen::Index r = 0; r < z.rows(); ++r)
                    mask(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
            z = z.cwiseProduct(mask);
        }
        if (cache) {
            cache->post_act.push_back(z);
            cache->dropout_mask.push_back(std::move(mask));
        }
        a = std::move(z);
    }
    return a;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& input) {
    return forward(model, Eigen::MatrixXd(input), nullptr, nullptr).col(0);
}

Gradients backward(const MlpModel& model, const ForwardCache& cache,
                   const Eigen::MatrixXd& output_grad) {
    if (cache.layer_count != model.layers.size() ||
        cache.pre_act.size() != model.layers.size())
        throw std::invalid_argument("backward: cache does not match model");
    if (output_grad.rows() != model.output_dim() ||
        output_grad.cols() != cache.input.cols())
        throw std::invalid_argument("backward: output_grad shape mismatch");

    Gradients grads;
    grads.layers.resize(model.layers.size());

    Eigen::MatrixXd upstream = output_grad;
    for (size_t idx = model.layers.size(); idx-- > 0;) {
        const DenseLayer& layer = model.layers[idx];
        const Eigen::MatrixXd& mask = cache.dropout_mask[idx];
        if (mask.size() > 0)
            upstream = upstream.cwiseProduct(mask);

        Eigen::MatrixXd dz = upstream.cwiseProduct(
            activation_grad(cache.pre_act[idx], layer.activation, layer.leaky_slope));

        const Eigen::MatrixXd& a_prev = idx == 0 ? cache.input : cache.post_act[idx - 1];
        grads.layers[idx].dweights.noalias() = dz * a_prev.transpose();
        grads.layers[idx].dbias = dz.rowwise().sum();
        upstream.noalias() = layer.weights.transpose() * dz;
    }
    grads.dinput = std::move(upstream);
    return grads;
}

AdamState make_adam(const MlpModel& model, double learning_rate) {
    AdamState st;
    st.learning_rate = learning_rate;
    for (const DenseLayer& l : model.layers) {
        LayerGrads z;
        z.dweights = Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols());
        z.dbias = Eigen::VectorXd::Zero(l.bias.size());
        st.first_moment.push_back(z);
        st.second_moment.push_back(z);
    }
    return st;
}

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state) {
    if (grads.layers.size() != model.layers.size() ||
        state.first_moment.size() != model.layers.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    for (const LayerGrads& g : grads.layers)
        if (!g.dweights.allFinite() || !g.dbias.allFinite())
            throw std::runtime_error("adam_step: non-finite gradients, aborting training");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * grad;
        v = state.beta2 * v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
        param.array() -=
            state.learning_rate * (m.array() / bc1) /
            ((v.array() / bc2).sqrt() + state.epsilon);
    };

    for (size_t i = 0; i < model.layers.size(); ++i) {
        update(model.layers[i].weights, grads.layers[i].dweights,
               state.first_moment[i].dweights, state.second_moment[i].dweights);
        update(model.layers[i].bias, grads.layers[i].dbias, state.first_moment[i].dbias,
               state.second_moment[i].dbias);
    }
}

namespace {
constexpr char kCkptMagic[] = "BLOCCKP\x01";
constexpr std::uint32_t kCkptVersion = 1;
} // namespace

void write_mlp(PayloadWriter& w, nlohmann::json& meta, const MlpModel& model) {
    model.validate();
    meta["dropout_rate"] = model.dropout_rate;
    json layers = json::array();
    for (const DenseLayer& l : model.layers) {
        layers.push_back({{"out", l.out_dim()},
                          {"in", l.in_dim()},
                          {"activation", activation_name(l.activation)},
                          {"leaky_slope", l.leaky_slope}});
        w.put_f64_array(l.weights.data(), static_cast<size_t>(l.weights.size()));
        w.put_f64_array(l.bias.data(), static_cast<size_t>(l.bias.size()));
    }
    meta["layers"] = layers;
}

MlpModel read_mlp(PayloadReader& r, const nlohmann::json& meta) {
    MlpModel model;
    model.dropout_rate = meta.at("dropout_rate").get<double>();
    for (const json& lj : meta.at("layers")) {
        DenseLayer l;
        const int out = lj.at("out").get<int>();
        const int in = lj.at("in").get<int>();
        l.activation = activation_from_name(lj.at("activation").get<std::string>());
        l.leaky_slope = lj.at("leaky_slope").get<double>();
        l.weights.resize(out, in);
        r.get_f64_array(l.weights.data(), static_cast<size_t>(l.weights.size()));
        l.bias.resize(out);
        r.get_f64_array(l.bias.data(), static_cast<size_t>(l.bias.size()));
        model.layers.push_back(std::move(l));
    }
    model.validate();
    return model;
}

void save_mlp(const std::string& path, const MlpModel& model,
              const std::string& extra_meta_json) {
    Envelope env;
    env.magic = kCkptMagic;
    env.version = kCkptVersion;

    json meta;
    meta["kind"] = "mlp";
    meta["extra"] = json::parse(extra_meta_json);
    PayloadWriter w(env.payload);
    write_mlp(w, meta, model);
    env.meta = meta.dump();
    write_envelope(path, env);
}

MlpModel load_mlp(const std::string& path, std::string* extra_meta_json) {
    Envelope env = read_envelope(path, kCkptMagic, kCkptVersion);
    json meta = json::parse(env.meta);
    PayloadReader r(env.payload);
    MlpModel model = read_mlp(r, meta);
    if (extra_meta_json)
        *extra_meta_json = meta.at("extra").dump();
    return model;
}

} // namespace bandloc::nn
