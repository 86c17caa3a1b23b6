#include "osr/training.hpp"

#include "osr/data.hpp"
#include "osr/errors.hpp"
#include "osr/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace osr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
  if (learning_rate <= 0) throw ConfigError("TrainConfig: learning_rate must be positive");
  if (lambda_cls < 0 || lambda_loc < 0)
    throw ConfigError("TrainConfig: loss weights must be nonnegative");
  if (lambda_cls + lambda_loc <= 0)
    throw ConfigError("TrainConfig: lambda_cls + lambda_loc must be positive");
  if (resplit_interval < 1) throw ConfigError("TrainConfig: resplit_interval must be >= 1");
  if (val_fraction <= 0 || val_fraction >= 1)
    throw ConfigError("TrainConfig: val_fraction must lie in (0, 1)");
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"epochs", epochs},
              {"lambda_cls", lambda_cls},
              {"lambda_loc", lambda_loc},
              {"resplit_interval", resplit_interval},
              {"val_fraction", val_fraction},
              {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.lambda_cls = j.at("lambda_cls").get<double>();
  c.lambda_loc = j.at("lambda_loc").get<double>();
  c.resplit_interval = j.at("resplit_interval").get<int>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// ---------------------------------------------------------------------------
// Loss

LossBreakdown hybrid_loss(const Tensor& probabilities, int label, const Tensor* predicted_mask,
                          const Tensor* ground_truth_mask, double lambda_cls, double lambda_loc) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size())
    throw ConfigError("hybrid_loss: label " + std::to_string(label) +
                      " out of range for " + std::to_string(probabilities.size()) + " classes");
  LossBreakdown out;
  double py = probabilities[static_cast<std::size_t>(label)];
  if (py < 1e-12) {
    py = 1e-12;
    out.ce_clamped = true;
  }
  out.ce = -std::log(py);
  if (predicted_mask != nullptr && ground_truth_mask != nullptr) {
    if (!predicted_mask->same_shape(*ground_truth_mask))
      throw ConfigError("hybrid_loss: mask shapes differ, " + predicted_mask->shape_str() +
                        " vs " + ground_truth_mask->shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted_mask->size(); ++i) {
      const double d = (*ground_truth_mask)[i] - (*predicted_mask)[i];
      acc += d * d;
    }
    out.mse = acc / static_cast<double>(predicted_mask->size());
    out.total = lambda_cls * out.ce + lambda_loc * out.mse;
  } else {
    out.mse = 0.0;
    out.total = lambda_cls * out.ce + lambda_loc * out.mse;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resplit

ResplitResult resplit(const std::vector<int>& labels, double val_fraction, std::uint64_t seed,
                      int epoch) {
  if (labels.empty()) throw ConfigError("resplit: sample pool is empty");
  if (val_fraction <= 0 || val_fraction >= 1)
    throw ConfigError("resplit: val_fraction must lie in (0, 1)");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int>(i));

  ResplitResult res;
  Rng rng(seed, 0x5EED0000ULL + static_cast<std::uint64_t>(epoch));
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      res.warnings.push_back("class " + std::to_string(cls) + " has " +
                             std::to_string(idx.size()) +
                             " sample(s); placing all of them in train");
      res.train_indices.insert(res.train_indices.end(), idx.begin(), idx.end());
      continue;
    }
    rng.shuffle(idx);
    const auto n = idx.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    res.val_indices.insert(res.val_indices.end(), idx.begin(), idx.begin() + n_val);
    res.train_indices.insert(res.train_indices.end(), idx.begin() + n_val, idx.end());
  }
  std::sort(res.train_indices.begin(), res.train_indices.end());
  std::sort(res.val_indices.begin(), res.val_indices.end());
  return res;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<nn::Param*>& params) {
  if (!initialized_) {
    for (const nn::Param* p : params) {
      if (!p->trainable) continue;
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
      names_.push_back(p->name);
    }
    initialized_ = true;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t slot = 0;
  for (nn::Param* p : params) {
    if (!p->trainable) continue;
    Tensor& m = m_[slot];
    Tensor& v = v_[slot];
    ++slot;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::map<std::string, const Tensor*> Adam::moments() const {
  std::map<std::string, const Tensor*> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out["m/" + names_[i]] = &m_[i];
    out["v/" + names_[i]] = &v_[i];
  }
  return out;
}

void Adam::load_moments(const std::map<std::string, Tensor>& saved, std::int64_t steps,
                        const std::vector<nn::Param*>& params) {
  m_.clear();
  v_.clear();
  names_.clear();
  for (const nn::Param* p : params) {
    if (!p->trainable) continue;
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
    names_.push_back(p->name);
    auto im = saved.find("m/" + p->name);
    if (im != saved.end()) m_.back() = im->second;
    auto iv = saved.find("v/" + p->name);
    if (iv != saved.end()) v_.back() = iv->second;
  }
  t_ = steps;
  initialized_ = true;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[8] = {'O', 'S', 'R', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

json tensor_table(const std::map<std::string, Tensor>& tensors) {
  json table = json::array();
  for (const auto& [name, t] : tensors) {
    table.push_back(json{{"name", name}, {"shape", t.shape()}});
  }
  return table;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint file for writing: " + path);
  json header{{"config", ckpt.config.to_json()},
              {"epoch", ckpt.epoch},
              {"adam_steps", ckpt.adam_steps},
              {"rng_state", ckpt.rng_state},
              {"best_val_accuracy", ckpt.best_val_accuracy},
              {"tensors", tensor_table(ckpt.tensors)},
              {"adam_moments", tensor_table(ckpt.adam_moments)}};
  const std::string hs = header.dump();
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : ckpt.tensors)
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  for (const auto& [name, t] : ckpt.adam_moments)
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint file: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  std::uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!is) throw IoError("truncated checkpoint file: " + path);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw IoError("truncated checkpoint file: " + path);
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.adam_steps = header.at("adam_steps").get<std::int64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.best_val_accuracy = header.at("best_val_accuracy").get<double>();
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
  }

  auto read_tensors = [&](const json& table, std::map<std::string, Tensor>& out) {
    for (const auto& entry : table) {
      const std::string name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      Tensor t(shape);
      is.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!is) throw IoError("truncated checkpoint file: " + path);
      out.emplace(name, std::move(t));
    }
  };
  read_tensors(header.at("tensors"), ckpt.tensors);
  read_tensors(header.at("adam_moments"), ckpt.adam_moments);
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, HybridModel& model) {
  auto params = model.params();
  std::map<std::string, nn::Param*> by_name;
  for (nn::Param* p : params) by_name[p->name] = p;

  std::vector<std::string> missing, unexpected, mismatched;
  for (const auto& [name, p] : by_name)
    if (!ckpt.tensors.count(name)) missing.push_back(name);
  for (const auto& [name, t] : ckpt.tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      unexpected.push_back(name);
    } else if (it->second->value.shape() != t.shape()) {
      mismatched.push_back(name + " (model " + it->second->value.shape_str() + ", checkpoint " +
                           t.shape_str() + ")");
    }
  }
  if (!missing.empty() || !unexpected.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << "checkpoint does not match model configuration.";
    auto emit = [&os](const char* what, const std::vector<std::string>& keys) {
      if (keys.empty()) return;
      os << " " << what << ":";
      for (const auto& k : keys) os << " " << k;
      os << ".";
    };
    emit("missing keys", missing);
    emit("unexpected keys", unexpected);
    emit("shape mismatches", mismatched);
    throw ConfigError(os.str());
  }
  for (const auto& [name, t] : ckpt.tensors) by_name[name]->value = t;
}

std::map<std::string, Tensor> snapshot_params(HybridModel& model) {
  std::map<std::string, Tensor> out;
  for (nn::Param* p : model.params()) out.emplace(p->name, p->value);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Batch {
  Tensor images;
  std::vector<int> labels;
  Tensor masks;  // (B, H_f, W_f); empty when unused
};

Batch assemble_batch(const LabeledSet& pool, const std::vector<Tensor>& pooled_masks,
                     const std::vector<int>& order, std::size_t begin, std::size_t end,
                     bool with_masks) {
  const Tensor& first = pool.images[order[begin]];
  const std::size_t b = end - begin;
  Batch batch;
  batch.images = Tensor({b, first.dim(0), first.dim(1), first.dim(2)});
  const std::size_t stride = first.size();
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor& img = pool.images[order[begin + i]];
    std::memcpy(batch.images.data() + i * stride, img.data(), stride * sizeof(double));
    batch.labels.push_back(pool.labels[order[begin + i]]);
  }
  if (with_masks) {
    const Tensor& m0 = pooled_masks[order[begin]];
    batch.masks = Tensor({b, m0.dim(0), m0.dim(1)});
    for (std::size_t i = 0; i < b; ++i) {
      const Tensor& m = pooled_masks[order[begin + i]];
      std::memcpy(batch.masks.data() + i * m.size(), m.data(), m.size() * sizeof(double));
    }
  }
  return batch;
}

double evaluate_accuracy(HybridModel& model, const LabeledSet& pool,
                         const std::vector<int>& indices, int batch_size) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < indices.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(indices.size(), begin + static_cast<std::size_t>(batch_size));
    Batch b = assemble_batch(pool, {}, indices, begin, end, /*with_masks=*/false);
    auto out = model.forward_batch(b.images, /*training=*/false);
    const std::size_t n = out.logits.dim(1);
    for (std::size_t i = 0; i < end - begin; ++i) {
      Tensor row({n}, std::vector<double>(out.logits.data() + i * n,
                                          out.logits.data() + (i + 1) * n));
      if (argmax_lowest(row) == b.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train(HybridModel& model, const LabeledSet& pool, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&, bool has_mse)>& on_epoch,
                  const Checkpoint* resume) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (pool.size() == 0) throw ConfigError("train: empty training pool");
  for (std::size_t i = 0; i < pool.labels.size(); ++i) {
    if (pool.labels[i] < 0 || pool.labels[i] >= mc.num_classes)
      throw ConfigError("train: sample " + std::to_string(i) + " has label " +
                        std::to_string(pool.labels[i]) + " outside the in-set range [0, " +
                        std::to_string(mc.num_classes) + ")");
  }
  const bool use_masks = mc.localization_enabled;
  if (use_masks && !pool.has_masks())
    throw ConfigError("train: localization is enabled but the dataset provides no masks");

  // Ground-truth masks are pooled to feature resolution once.
  std::vector<Tensor> pooled_masks;
  if (use_masks) {
    pooled_masks.reserve(pool.size());
    for (const Tensor& m : pool.masks)
      pooled_masks.push_back(prepare_mask(m, mc.feature_height, mc.feature_width));
  }

  Adam adam(cfg.learning_rate);
  int start_epoch = 0;
  double best_acc = -1.0;
  std::map<std::string, Tensor> best_params = snapshot_params(model);
  if (resume != nullptr) {
    apply_checkpoint(*resume, model);
    adam.load_moments(resume->adam_moments, resume->adam_steps, model.params());
    start_epoch = resume->epoch;
    best_acc = resume->best_val_accuracy;
    best_params = resume->tensors;
  }

  TrainResult result;
  ResplitResult split;
  int split_epoch = -1;
  const auto n = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const int wanted_split = epoch - (epoch % cfg.resplit_interval);
    if (split_epoch != wanted_split) {
      split = resplit(pool.labels, cfg.val_fraction, cfg.seed, wanted_split);
      split_epoch = wanted_split;
    }

    std::vector<int> order = split.train_indices;
    Rng shuffle_rng(cfg.seed, 0xBA7C0000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double sum_ce = 0.0, sum_mse = 0.0, sum_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += n) {
      const std::size_t end = std::min(order.size(), begin + n);
      const std::size_t b = end - begin;
      Batch batch = assemble_batch(pool, pooled_masks, order, begin, end, use_masks);
      auto out = model.forward_batch(batch.images, /*training=*/true);

      const std::size_t ncls = out.logits.dim(1);
      Tensor probs = nn::softmax_rows(out.logits);
      Tensor dlogits({b, ncls});
      Tensor dmasks;
      if (use_masks) dmasks = Tensor(batch.masks.shape());

      double batch_total = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        Tensor p({ncls}, std::vector<double>(probs.data() + i * ncls,
                                             probs.data() + (i + 1) * ncls));
        LossBreakdown lb;
        if (use_masks) {
          const std::size_t msz = batch.masks.size() / b;
          Tensor pm({batch.masks.dim(1), batch.masks.dim(2)},
                    std::vector<double>(out.masks.data() + i * msz,
                                        out.masks.data() + (i + 1) * msz));
          Tensor gm({batch.masks.dim(1), batch.masks.dim(2)},
                    std::vector<double>(batch.masks.data() + i * msz,
                                        batch.masks.data() + (i + 1) * msz));
          lb = hybrid_loss(p, batch.labels[i], &pm, &gm, cfg.lambda_cls, cfg.lambda_loc);
          const double scale = cfg.lambda_loc * 2.0 / (static_cast<double>(msz) *
                                                       static_cast<double>(b));
          for (std::size_t k = 0; k < msz; ++k)
            dmasks[i * msz + k] = scale * (pm[k] - gm[k]);
        } else {
          lb = hybrid_loss(p, batch.labels[i], nullptr, nullptr, cfg.lambda_cls, cfg.lambda_loc);
        }
        sum_ce += lb.ce;
        sum_mse += lb.mse;
        sum_total += lb.total;
        batch_total += lb.total;
        for (std::size_t c = 0; c < ncls; ++c) {
          const double onehot = (static_cast<int>(c) == batch.labels[i]) ? 1.0 : 0.0;
          dlogits.at(i, c) = cfg.lambda_cls * (p[c] - onehot) / static_cast<double>(b);
        }
      }
      if (!std::isfinite(batch_total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(begin / n));
      }
      model.zero_grads();
      model.backward(dlogits, use_masks ? &dmasks : nullptr);
      adam.step(model.params());
    }

    EpochMetrics em;
    em.epoch = epoch;
    const double cnt = static_cast<double>(order.size());
    em.train_ce = sum_ce / cnt;
    em.train_mse = sum_mse / cnt;
    em.train_loss = sum_total / cnt;
    em.val_accuracy = evaluate_accuracy(model, pool, split.val_indices, cfg.batch_size);
    if (!std::isnan(em.val_accuracy) && em.val_accuracy > best_acc) {
      best_acc = em.val_accuracy;
      best_params = snapshot_params(model);
    }
    result.history.push_back(em);
    if (on_epoch) on_epoch(em, use_masks);
  }

  // The model is left holding the selected (best-validation) parameters.
  Checkpoint ckpt;
  ckpt.config = mc;
  ckpt.tensors = best_params;
  for (const auto& [name, t] : adam.moments()) ckpt.adam_moments[name] = *t;
  ckpt.adam_steps = adam.steps();
  ckpt.epoch = cfg.epochs;
  ckpt.rng_state = "stateless:seed=" + std::to_string(cfg.seed) +
                   ":epoch=" + std::to_string(cfg.epochs);
  ckpt.best_val_accuracy = best_acc;
  apply_checkpoint(ckpt, model);
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace osr
