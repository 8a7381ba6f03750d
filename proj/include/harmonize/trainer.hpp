#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "harmonize/adam.hpp"
#include "harmonize/checkpoint.hpp"
#include "harmonize/dataset.hpp"
#include "harmonize/extractor.hpp"
#include "harmonize/generator.hpp"
#include "harmonize/image.hpp"
#include "harmonize/losses.hpp"
#include "harmonize/rng.hpp"

namespace harmonize {

namespace detail {

template <typename T>
std::string num_str(T v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, end);
}

template <typename T>
T num_parse(const std::string& s, const std::string& key) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw CheckpointError("config: cannot parse " + key + "='" + s + "'");
    return v;
}

}  // namespace detail

struct TrainConfig {
    std::size_t resolution = 64;
    std::size_t code_dim = 16;
    float margin = 1.0f;
    float lambda = 0.01f;
    bool detach_targets = false;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    float lr = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float adam_eps = 1e-8f;
    std::uint64_t seed = 7;
    float init_std = 0.02f;
    std::size_t checkpoint_every = 10;  // epochs; 0 = final checkpoint only
    std::size_t gen_base_width = 64;

    void validate() const {
        if (resolution == 0 || resolution % 32 != 0)
            throw std::invalid_argument("config: resolution must be a positive multiple of 32");
        if (code_dim == 0) throw std::invalid_argument("config: code_dim must be positive");
        if (!(margin > 0.0f)) throw std::invalid_argument("config: margin must be positive");
        if (lambda < 0.0f) throw std::invalid_argument("config: lambda must be non-negative");
        if (epochs == 0) throw std::invalid_argument("config: epochs must be positive");
        if (batch_size < 2)
            throw std::invalid_argument("config: batch_size must be at least 2 (batch statistics)");
        if (!(lr > 0.0f) || !(init_std > 0.0f))
            throw std::invalid_argument("config: lr and init_std must be positive");
        if (gen_base_width == 0) throw std::invalid_argument("config: gen_base_width must be positive");
    }

    /// Deterministic key=value serialization (shortest round-trip floats).
    std::string to_text() const {
        std::string t;
        auto put = [&](const char* k, const std::string& v) { t += std::string(k) + "=" + v + "\n"; };
        put("resolution", detail::num_str(resolution));
        put("code_dim", detail::num_str(code_dim));
        put("margin", detail::num_str(margin));
        put("lambda", detail::num_str(lambda));
        put("detach_targets", detach_targets ? "1" : "0");
        put("epochs", detail::num_str(epochs));
        put("batch_size", detail::num_str(batch_size));
        put("lr", detail::num_str(lr));
        put("beta1", detail::num_str(beta1));
        put("beta2", detail::num_str(beta2));
        put("adam_eps", detail::num_str(adam_eps));
        put("seed", detail::num_str(seed));
        put("init_std", detail::num_str(init_std));
        put("checkpoint_every", detail::num_str(checkpoint_every));
        put("gen_base_width", detail::num_str(gen_base_width));
        return t;
    }

    static TrainConfig from_text(const std::string& text) {
        const auto kv = parse_kv(text);
        auto get = [&](const char* k) {
            auto it = kv.find(k);
            if (it == kv.end()) throw CheckpointError("config: missing key '" + std::string(k) + "'");
            return it->second;
        };
        TrainConfig c;
        c.resolution = detail::num_parse<std::size_t>(get("resolution"), "resolution");
        c.code_dim = detail::num_parse<std::size_t>(get("code_dim"), "code_dim");
        c.margin = detail::num_parse<float>(get("margin"), "margin");
        c.lambda = detail::num_parse<float>(get("lambda"), "lambda");
        c.detach_targets = get("detach_targets") == "1";
        c.epochs = detail::num_parse<std::size_t>(get("epochs"), "epochs");
        c.batch_size = detail::num_parse<std::size_t>(get("batch_size"), "batch_size");
        c.lr = detail::num_parse<float>(get("lr"), "lr");
        c.beta1 = detail::num_parse<float>(get("beta1"), "beta1");
        c.beta2 = detail::num_parse<float>(get("beta2"), "beta2");
        c.adam_eps = detail::num_parse<float>(get("adam_eps"), "adam_eps");
        c.seed = detail::num_parse<std::uint64_t>(get("seed"), "seed");
        c.init_std = detail::num_parse<float>(get("init_std"), "init_std");
        c.checkpoint_every = detail::num_parse<std::size_t>(get("checkpoint_every"), "checkpoint_every");
        c.gen_base_width = detail::num_parse<std::size_t>(get("gen_base_width"), "gen_base_width");
        return c;
    }
};

struct StepLoss {
    float rec = 0, ffhat = 0, fhatb = 0, total = 0;
};

// Joint training of extractor and generator under the combined objective.
// Fully deterministic given (config, dataset): shuffling, init, and batch
// padding all draw from one seeded generator whose state is checkpointed.
class Trainer {
  public:
    explicit Trainer(TrainConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
        cfg_.validate();
        ext_ = ExtractorNet<float>(ExtractorConfig{cfg_.code_dim, {32, 64, 128, 256, 256}});
        gen_ = GeneratorNet<float>(
            GeneratorConfig{cfg_.code_dim, generator_widths(cfg_.resolution, cfg_.gen_base_width)});
        ext_.init(rng_, cfg_.init_std);
        gen_.init(rng_, cfg_.init_std);

        ParamList<float> params;
        ext_.collect("E", params);
        gen_.collect("G", params);
        opt_ = Adam<float>(params, AdamConfig<float>{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps});
    }

    static Trainer from_checkpoint(const Checkpoint& ck) {
        Trainer t(TrainConfig::from_text(ck.config_text));
        t.restore(ck);
        return t;
    }

    /// One optimizer step on a (B,3,R,R)/(B,1,R,R) batch.
    StepLoss train_step(const Tensor<float>& composite, const Tensor<float>& real,
                        const Tensor<float>& mask) {
        Tensor<float> bg_mask = mask_complement(mask);
        Tensor<float> z_b = ext_.forward(composite, bg_mask, true);
        Tensor<float> input = assemble_input(composite, mask, z_b);
        Tensor<float> output = gen_.forward(input, true);
        Tensor<float> zf_tilde = ext_.forward(composite, mask, true);
        Tensor<float> z_f = ext_.forward(real, mask, true);
        Tensor<float> zf_hat = ext_.forward(output, mask, true);

        LossConfig<float> lcfg{cfg_.margin, cfg_.lambda, cfg_.detach_targets};
        LossBreakdown<float> lb =
            total_loss(output, real, CodeQuadruple<float>{zf_tilde, z_b, z_f, zf_hat}, lcfg);
        opt_.zero_grad();
        lb.total.backward();
        opt_.step();
        ++step_;
        return {lb.rec[0], lb.ffhat[0], lb.fhatb[0], lb.total[0]};
    }

    // Runs the remaining epochs, appending one CSV row per step to log_path
    // and checkpointing atomically every checkpoint_every epochs (and at the
    // end) when checkpoint_path is non-empty.
    void train(const std::vector<ImageTriplet>& data, const std::string& log_path,
               const std::string& checkpoint_path) {
        if (data.empty()) throw std::invalid_argument("train: empty dataset");
        for (const auto& t : data)
            if (t.composite.dim(1) != cfg_.resolution || t.composite.dim(2) != cfg_.resolution)
                throw std::invalid_argument("train: sample '" + t.id + "' is " +
                                            std::to_string(t.composite.dim(1)) + "x" +
                                            std::to_string(t.composite.dim(2)) +
                                            ", expected the configured resolution " +
                                            std::to_string(cfg_.resolution));

        std::ofstream log;
        if (!log_path.empty()) {
            log.open(log_path, step_ == 0 ? std::ios::trunc : std::ios::app);
            if (!log) throw std::runtime_error("train: cannot open loss log " + log_path);
            if (step_ == 0) log << "step,l_rec,l_ffhat,l_fhatb,total\n";
        }

        const std::size_t n = data.size();
        const std::size_t batches = (n + cfg_.batch_size - 1) / cfg_.batch_size;
        while (epoch_ < cfg_.epochs) {
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            rng_.shuffle(order);

            for (std::size_t b = 0; b < batches; ++b) {
                std::vector<Tensor<float>> comps, reals, masks;
                for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
                    // wraps around so the last batch keeps full batch statistics
                    const std::size_t idx = order[(b * cfg_.batch_size + k) % n];
                    comps.push_back(data[idx].composite);
                    reals.push_back(data[idx].real);
                    masks.push_back(data[idx].mask);
                }
                const std::uint64_t row = step_;  // 0-based index of this step
                StepLoss sl =
                    train_step(stack_batch(comps), stack_batch(reals), stack_batch(masks));
                if (log)
                    log << row << ',' << detail::num_str(sl.rec) << ','
                        << detail::num_str(sl.ffhat) << ',' << detail::num_str(sl.fhatb) << ','
                        << detail::num_str(sl.total) << '\n' << std::flush;
                if (!std::isfinite(sl.total))
                    throw std::runtime_error("train: non-finite loss at step " +
                                             std::to_string(row) + "; aborting");
            }
            ++epoch_;
            const bool last = epoch_ == cfg_.epochs;
            const bool periodic =
                cfg_.checkpoint_every != 0 && epoch_ % cfg_.checkpoint_every == 0;
            if (!checkpoint_path.empty() && (last || periodic))
                save_checkpoint(checkpoint_path, make_checkpoint());
        }
    }

    Checkpoint make_checkpoint() {
        Checkpoint ck;
        ck.config_text = cfg_.to_text();
        ck.meta_text = "step=" + detail::num_str(step_) + "\nepoch=" + detail::num_str(epoch_) +
                       "\nadam_t=" + detail::num_str(opt_.steps_taken()) + "\nrng=" + rng_.state() +
                       "\n";
        auto push = [&](const std::string& name, const Tensor<float>& t) {
            ck.arrays.push_back(NamedArray{name, t.shape(), t.values()});
        };
        ParamList<float> params, buffers;
        ext_.collect("E", params);
        gen_.collect("G", params);
        ext_.collect_buffers("E", buffers);
        gen_.collect_buffers("G", buffers);
        for (auto& [name, t] : params) push(name, t);
        for (auto& [name, t] : buffers) push(name, t);
        for (std::size_t i = 0; i < opt_.params().size(); ++i) {
            const std::string& name = opt_.params()[i].first;
            const Shape& shape = opt_.params()[i].second.shape();
            ck.arrays.push_back(NamedArray{"opt.m." + name, shape, opt_.moment1(i)});
            ck.arrays.push_back(NamedArray{"opt.v." + name, shape, opt_.moment2(i)});
        }
        return ck;
    }

    void restore(const Checkpoint& ck) {
        auto fetch = [&](const std::string& name, const Shape& shape) -> const NamedArray& {
            const NamedArray* a = ck.find(name);
            if (!a) throw CheckpointError("checkpoint: missing array '" + name + "'");
            if (a->shape != shape)
                throw CheckpointError("checkpoint: array '" + name + "' has shape " +
                                      shape_str(a->shape) + ", expected " + shape_str(shape));
            return *a;
        };
        ParamList<float> params, buffers;
        ext_.collect("E", params);
        gen_.collect("G", params);
        ext_.collect_buffers("E", buffers);
        gen_.collect_buffers("G", buffers);
        for (auto& [name, t] : params) t.values() = fetch(name, t.shape()).data;
        for (auto& [name, t] : buffers) t.values() = fetch(name, t.shape()).data;
        for (std::size_t i = 0; i < opt_.params().size(); ++i) {
            const std::string& name = opt_.params()[i].first;
            const Shape& shape = opt_.params()[i].second.shape();
            opt_.moment1(i) = fetch("opt.m." + name, shape).data;
            opt_.moment2(i) = fetch("opt.v." + name, shape).data;
        }
        const auto meta = parse_kv(ck.meta_text);
        auto get = [&](const char* k) {
            auto it = meta.find(k);
            if (it == meta.end()) throw CheckpointError("checkpoint: missing metadata '" + std::string(k) + "'");
            return it->second;
        };
        step_ = detail::num_parse<std::uint64_t>(get("step"), "step");
        epoch_ = detail::num_parse<std::size_t>(get("epoch"), "epoch");
        opt_.set_steps_taken(detail::num_parse<std::uint64_t>(get("adam_t"), "adam_t"));
        rng_.set_state(get("rng"));
    }

    ExtractorNet<float>& extractor() { return ext_; }
    GeneratorNet<float>& generator() { return gen_; }
    const TrainConfig& config() const { return cfg_; }
    std::uint64_t step() const { return step_; }
    std::size_t epoch() const { return epoch_; }
    Rng& rng() { return rng_; }

  private:
    TrainConfig cfg_;
    Rng rng_;
    ExtractorNet<float> ext_;
    GeneratorNet<float> gen_;
    Adam<float> opt_;
    std::uint64_t step_ = 0;
    std::size_t epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Single-image inference helpers
// ---------------------------------------------------------------------------

inline Tensor<float> harmonize_single(GeneratorNet<float>& gen, ExtractorNet<float>& ext,
                                      const Tensor<float>& composite, const Tensor<float>& mask) {
    NoGradGuard no_grad;
    Tensor<float> out =
        harmonize_images(gen, ext, stack_batch<float>({composite}), stack_batch<float>({mask}), false);
    return unstack(out, 0);
}

inline Tensor<float> background_harmonize_single(GeneratorNet<float>& gen,
                                                 ExtractorNet<float>& ext,
                                                 const Tensor<float>& composite,
                                                 const Tensor<float>& mask) {
    NoGradGuard no_grad;
    Tensor<float> out = background_harmonize_images(gen, ext, stack_batch<float>({composite}),
                                                    stack_batch<float>({mask}), false);
    return unstack(out, 0);
}

}  // namespace harmonize
