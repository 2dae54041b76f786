#include "aal/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "io_util.hpp"

namespace aal {

template <typename T>
Sgd<T>::Sgd(NamedTensors<T> params, double momentum) : params_(std::move(params)), momentum_(momentum) {
  for (const auto& [name, p] : params_) velocity_.emplace_back(p.numel(), T(0));
}

template <typename T>
void Sgd<T>::step(double lr) {
  const T mu = static_cast<T>(momentum_), rate = static_cast<T>(lr);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T>& p = params_[k].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto& v = velocity_[k];
    T* w = p.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      w[i] -= rate * v[i];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& [name, p] : params_) p.clear_grad();
}

template <typename T>
double Sgd<T>::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& [name, p] : params_) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad()) g *= f;
    }
  }
  return norm;
}

template <typename T>
void Sgd<T>::reset_velocity(const std::string& name, std::span<const std::uint8_t> keep) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].first != name) continue;
    auto& v = velocity_[k];
    if (keep.size() != v.size()) throw DimensionError("velocity mask size mismatch for " + name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!keep[i]) v[i] = T(0);
    }
    return;
  }
  throw InputError("optimizer has no parameter named " + name);
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = "epoch,lambda,loss_ce,loss_att,train_acc,val_acc\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + (r.lambda ? num(*r.lambda) : "") + "," + num(r.loss_ce) + "," +
           (r.loss_att ? num(*r.loss_att) : "") + "," + num(r.train_acc) + "," + num(r.val_acc) + "\n";
  }
  return out;
}

namespace {

Dataset slice_dataset(const Dataset& d, std::size_t begin, std::size_t end) {
  Dataset out;
  out.classes = d.classes;
  out.pixels.assign(d.pixels.begin() + static_cast<std::ptrdiff_t>(begin * kCifarPixels),
                    d.pixels.begin() + static_cast<std::ptrdiff_t>(end * kCifarPixels));
  out.labels.assign(d.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    d.labels.begin() + static_cast<std::ptrdiff_t>(end));
  if (d.has_boxes()) {
    out.boxes.assign(d.boxes.begin() + static_cast<std::ptrdiff_t>(begin),
                     d.boxes.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

nlohmann::json link_meta(const TrainConfig& c) {
  return {{"heads", c.heads}, {"layers", c.depth}, {"block_widths", c.teacher_widths}};
}

std::string make_meta(const TrainConfig& config, int epoch, bool links) {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config_to_json(config));
  j["epoch"] = epoch;
  j["model"] = config.model;
  if (links) j["link_meta"] = link_meta(config);
  return j.dump();
}

std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

void check_labels(const Dataset& d, int classes, const std::string& which) {
  for (int y : d.labels) {
    if (y < 0 || y >= classes) {
      throw ConfigError(which + " set has label " + std::to_string(y) + " but the model has " +
                        std::to_string(classes) + " classes");
    }
  }
}

double fraction_correct(const std::vector<int>& pred, const std::vector<int>& labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit);
}

template <typename T>
class Runner {
 public:
  Runner(const TrainConfig& config, std::ostream* log) : config_(config), log_(log) {}

  TrainResult run() {
    auto [train_set, val_set] = load_datasets(config_);
    check_labels(train_set, config_.classes, "training");
    check_labels(val_set, config_.classes, "validation");
    return config_.model == "teacher" ? run_teacher(train_set, val_set) : run_student(train_set, val_set);
  }

 private:
  Tensor<T> prepare(const Dataset& d, const std::vector<std::size_t>& idx, Rng* aug_rng) const {
    Tensor<T> x = d.batch<T>(idx);
    if (aug_rng) x = augment_batch(x, aug_rng->next());
    normalize_cifar(x);
    return x;
  }

  template <typename Forward>
  double evaluate(const Dataset& d, Forward&& logits_of) const {
    NoGradScope<T> no_grad;
    double hit = 0.0;
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t b = 0; b < d.size(); b += bs) {
      const auto idx = iota_indices(b, std::min(d.size(), b + bs));
      hit += fraction_correct(argmax_rows(logits_of(prepare(d, idx, nullptr))), d.batch_labels(idx));
    }
    return d.size() ? hit / static_cast<double>(d.size()) : 0.0;
  }

  void write_metrics(const std::vector<EpochMetrics>& rows) const {
    if (!config_.metrics_path.empty()) detail::write_file(config_.metrics_path, metrics_csv(rows));
  }

  void report(const EpochMetrics& m) const {
    if (!log_) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d  loss_ce %.4f  loss_att %s  train_acc %.4f  val_acc %.4f\n", m.epoch,
                  m.loss_ce, m.loss_att ? std::to_string(*m.loss_att).c_str() : "-", m.train_acc, m.val_acc);
    *log_ << buf << std::flush;
  }

  bool checkpoint_due(int epoch) const {
    return epoch + 1 == config_.epochs || (config_.checkpoint_every > 0 && (epoch + 1) % config_.checkpoint_every == 0);
  }

  static void require_finite(const Tensor<T>& loss, int epoch) {
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + "; last good checkpoint kept");
    }
  }

  template <typename StepFn>
  EpochMetrics run_epoch(int epoch, const Dataset& train_set, Rng& order_rng, Rng& aug_rng, std::size_t& step,
                         std::size_t total_steps, StepFn&& step_fn) {
    std::vector<std::size_t> order = iota_indices(0, train_set.size());
    order_rng.shuffle(std::span<std::size_t>(order));
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    EpochMetrics m;
    m.epoch = epoch;
    double ce_sum = 0.0, att_sum = 0.0, hit = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + bs)));
      Tensor<T> x = prepare(train_set, idx, config_.augment ? &aug_rng : nullptr);
      const std::vector<int> y = train_set.batch_labels(idx);
      const double lr = cosine_lr(config_.lr, step++, total_steps);
      const auto [ce, att, pred] = step_fn(x, y, lr);
      const auto n = static_cast<double>(idx.size());
      ce_sum += ce * n;
      att_sum += att * n;
      hit += fraction_correct(pred, y);
    }
    const auto total = static_cast<double>(train_set.size());
    m.loss_ce = ce_sum / total;
    m.train_acc = hit / total;
    if (config_.aal) m.loss_att = att_sum / total;
    return m;
  }

  std::size_t total_steps(const Dataset& train_set) const {
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    return static_cast<std::size_t>(config_.epochs) * ((train_set.size() + bs - 1) / bs);
  }

  TrainResult run_teacher(const Dataset& train_set, const Dataset& val_set) {
    Rng rng(config_.seed);
    Teacher<T> teacher(config_.teacher(), rng);
    Rng order_rng(rng.next()), aug_rng(rng.next());
    Sgd<T> opt(teacher.parameters(), config_.momentum);
    TrainResult result;
    std::size_t step = 0;
    const std::size_t steps = total_steps(train_set);
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      EpochMetrics m = run_epoch(epoch, train_set, order_rng, aug_rng, step, steps,
                                 [&](const Tensor<T>& x, const std::vector<int>& y, double lr) {
                                   Tape<T> tape;
                                   TapeScope<T> scope(tape);
                                   Tensor<T> logits = teacher.forward(x, true).logits;
                                   Tensor<T> loss = cross_entropy(logits, std::span<const int>(y));
                                   require_finite(loss, epoch);
                                   tape.backward(loss);
                                   if (config_.grad_clip > 0.0) opt.clip_grad_norm(config_.grad_clip);
                                   opt.step(lr);
                                   opt.zero_grad();
                                   return std::tuple{static_cast<double>(loss.item()), 0.0, argmax_rows(logits)};
                                 });
      m.val_acc = evaluate(val_set, [&](const Tensor<T>& x) { return teacher.forward(x, false).logits; });
      result.history.push_back(m);
      write_metrics(result.history);
      report(m);
      if (checkpoint_due(epoch)) {
        Checkpoint ckpt;
        ckpt.put_all(teacher.parameters());
        ckpt.put_all(teacher.buffers());
        ckpt.meta = make_meta(config_, epoch, false);
        save_checkpoint(config_.checkpoint_path, ckpt);
      }
    }
    return result;
  }

  TrainResult run_student(const Dataset& train_set, const Dataset& val_set) {
    Rng rng(config_.seed);
    Student<T> student(config_.student(), rng);
    const StudentConfig sc = config_.student();
    std::optional<Teacher<T>> teacher;
    if (config_.aal || config_.hard_distill) {
      teacher.emplace(load_teacher<T>(config_.teacher_checkpoint, config_));
    }
    std::optional<LinkWeights<T>> links;
    NamedTensors<T> params = student.parameters();
    if (config_.aal) {
      links = init_links<T>(config_.teacher().total_channels(), sc.maps(), rng);
      if (!config_.mask_spec_path.empty()) {
        apply_mask(*links, std::span<const std::uint8_t>(build_range_mask(read_mask_spec(config_.mask_spec_path),
                                                                          config_.teacher_widths, sc.heads, sc.depth)));
      }
      if (!config_.link_mask_path.empty()) {
        int c = 0, k = 0;
        const Mask mask = read_raw_mask(config_.link_mask_path, c, k);
        if (c != static_cast<int>(links->channels()) || k != static_cast<int>(links->maps())) {
          throw ConfigError("link mask " + config_.link_mask_path + " does not match the link shape");
        }
        apply_mask(*links, std::span<const std::uint8_t>(mask));
      }
      params.emplace_back("aal.W", links->W);
      params.emplace_back("aal.b", links->b);
    }
    Rng order_rng(rng.next()), aug_rng(rng.next());
    Sgd<T> opt(params, config_.momentum);
    const LambdaSchedule schedule = config_.schedule();
    const int grid = sc.grid();

    TrainResult result;
    std::size_t step = 0;
    const std::size_t steps = total_steps(train_set);
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      const double lambda = config_.aal ? lambda_at(schedule, epoch) : 0.0;
      EpochMetrics m = run_epoch(
          epoch, train_set, order_rng, aug_rng, step, steps,
          [&](const Tensor<T>& x, const std::vector<int>& y, double lr) {
            std::optional<TeacherResult<T>> tr;
            if (teacher) tr = teacher_forward(*teacher, x, grid);
            Tape<T> tape;
            TapeScope<T> scope(tape);
            StudentOutput<T> out = student.forward(x);
            Tensor<T> ce = cross_entropy(out.logits, std::span<const int>(y));
            Tensor<T> loss = ce;
            double att_value = 0.0;
            if (config_.aal) {
              Tensor<T> att = attention_loss(augment(out.attn, *links), tr->acts.maps);
              att_value = static_cast<double>(att.item());
              loss = total_loss(ce, att, static_cast<T>(lambda));
            }
            if (config_.hard_distill) loss = add(loss, hard_distill_loss(out.logits, tr->logits));
            require_finite(loss, epoch);
            tape.backward(loss);
            if (config_.grad_clip > 0.0) opt.clip_grad_norm(config_.grad_clip);
            opt.step(lr);
            opt.zero_grad();
            return std::tuple{static_cast<double>(ce.item()), att_value, argmax_rows(out.logits)};
          });
      if (config_.aal) m.lambda = lambda;
      if (config_.aal && epoch == config_.prune_epoch) {
        LinkSnapshot snap = snapshot_of(*links);
        const Mask keep = prune_links(normalize_links(snap), config_.prune_threshold);
        apply_mask(*links, std::span<const std::uint8_t>(keep));
        opt.reset_velocity("aal.W", keep);
        if (log_) *log_ << "pruned links after epoch " << epoch << ", kept fraction " << kept_fraction(keep) << "\n";
      }
      m.val_acc = evaluate(val_set, [&](const Tensor<T>& x) { return student.forward(x).logits; });
      result.history.push_back(m);
      write_metrics(result.history);
      report(m);
      if (checkpoint_due(epoch)) {
        Checkpoint ckpt;
        ckpt.put_all(student.parameters());
        if (links) {
          ckpt.put("aal.W", links->W);
          ckpt.put("aal.b", links->b);
          ckpt.put("aal.mask", links->mask);
        }
        ckpt.meta = make_meta(config_, epoch, links.has_value());
        save_checkpoint(config_.checkpoint_path, ckpt);
      }
    }
    return result;
  }

  LinkSnapshot snapshot_of(const LinkWeights<T>& links) const {
    LinkSnapshot snap;
    snap.W.assign(links.W.data().begin(), links.W.data().end());
    snap.heads = config_.heads;
    snap.layers = config_.depth;
    snap.block_widths = config_.teacher_widths;
    return snap;
  }

  TrainConfig config_;
  std::ostream* log_;
};

}  // namespace

std::pair<Dataset, Dataset> load_datasets(const TrainConfig& config) {
  if (config.dataset_kind == "shapes") {
    const auto ntrain = static_cast<std::size_t>(config.train_size), nval = static_cast<std::size_t>(config.val_size);
    Dataset all = gen_shapes(config.data_seed, ntrain + nval, std::min(config.classes, 2));
    return {slice_dataset(all, 0, ntrain), slice_dataset(all, ntrain, ntrain + nval)};
  }
  Dataset train_set = read_cifar10_batch(config.dataset_path);
  Dataset val_set = config.val_path.empty() ? Dataset{} : read_cifar10_batch(config.val_path);
  if (config.train_size > 0) train_set = train_set.head(static_cast<std::size_t>(config.train_size));
  if (config.val_size > 0) val_set = val_set.head(static_cast<std::size_t>(config.val_size));
  if (train_set.size() == 0) throw InputError("training set " + config.dataset_path + " is empty");
  return {std::move(train_set), std::move(val_set)};
}

TrainResult train(const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (config.precision == "f64") return Runner<double>(config, log).run();
  return Runner<float>(config, log).run();
}

CheckpointMeta read_meta(const Checkpoint& ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("config") || !j.contains("epoch") || !j.contains("model")) {
    throw FormatError("checkpoint metadata lacks config, epoch or model");
  }
  CheckpointMeta meta;
  try {
    meta.config = config_from_json(j["config"].dump());
    meta.epoch = j["epoch"].get<int>();
    meta.model = j["model"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config echo is invalid: ") + e.what());
  }
  meta.has_links = j.contains("link_meta");
  return meta;
}

template <typename T>
Student<T> load_student(const Checkpoint& ckpt) {
  const CheckpointMeta meta = read_meta(ckpt);
  if (meta.model != "student") throw FormatError("checkpoint holds a " + meta.model + ", not a student");
  Rng rng(0);
  Student<T> student(meta.config.student(), rng);
  ckpt.load_all(student.parameters());
  return student;
}

template <typename T>
Teacher<T> load_teacher(const Checkpoint& ckpt) {
  const CheckpointMeta meta = read_meta(ckpt);
  if (meta.model != "teacher") throw FormatError("checkpoint holds a " + meta.model + ", not a teacher");
  Rng rng(0);
  Teacher<T> teacher(meta.config.teacher(), rng);
  ckpt.load_all(teacher.parameters());
  ckpt.load_all(teacher.buffers());
  return teacher;
}

template <typename T>
Teacher<T> load_teacher(const std::string& path, const TrainConfig& config) {
  if (path.empty()) throw ConfigError("a teacher checkpoint is required");
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(path);
  } catch (const InputError& e) {
    throw ConfigError(std::string("teacher checkpoint unavailable: ") + e.what());
  }
  Teacher<T> teacher = load_teacher<T>(ckpt);
  const TeacherConfig want = config.teacher();
  if (teacher.config().widths != want.widths) {
    throw ConfigError("teacher checkpoint widths differ from teacher_widths in the config");
  }
  // The tap point is a property of how the student run reads the teacher.
  TeacherConfig tc = teacher.config();
  tc.tap = want.tap;
  Rng rng(0);
  Teacher<T> out(tc, rng);
  ckpt.load_all(out.parameters());
  ckpt.load_all(out.buffers());
  for (auto& [name, p] : out.parameters()) p.set_requires_grad(false);
  return out;
}

template <typename T>
LinkWeights<T> load_links(const Checkpoint& ckpt) {
  if (!ckpt.has("aal.W") || !ckpt.has("aal.b") || !ckpt.has("aal.mask")) {
    throw FormatError("checkpoint holds no link weights (aal.W, aal.b, aal.mask)");
  }
  return LinkWeights<T>{ckpt.get<T>("aal.W"), ckpt.get<T>("aal.b"), ckpt.get<T>("aal.mask")};
}

LinkSnapshot snapshot_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.has("aal.W")) throw FormatError("checkpoint holds no link weights (aal.W)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("link_meta")) throw FormatError("checkpoint lacks link metadata");
  LinkSnapshot snap;
  try {
    const auto& lm = j["link_meta"];
    snap.heads = lm.at("heads").get<int>();
    snap.layers = lm.at("layers").get<int>();
    snap.block_widths = lm.at("block_widths").get<std::vector<int>>();
    snap.epoch = j.value("epoch", -1);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint link metadata is malformed: ") + e.what());
  }
  const Tensor<double> w = ckpt.get<double>("aal.W");
  snap.W.assign(w.data().begin(), w.data().end());
  if (w.rank() != 2 || static_cast<int>(w.dim(0)) != snap.channels() || static_cast<int>(w.dim(1)) != snap.maps()) {
    throw FormatError("aal.W shape " + shape_str(w.shape()) + " disagrees with the link metadata");
  }
  return snap;
}

template class Sgd<float>;
template class Sgd<double>;
template Student<float> load_student<float>(const Checkpoint&);
template Student<double> load_student<double>(const Checkpoint&);
template Teacher<float> load_teacher<float>(const Checkpoint&);
template Teacher<double> load_teacher<double>(const Checkpoint&);
template Teacher<float> load_teacher<float>(const std::string&, const TrainConfig&);
template Teacher<double> load_teacher<double>(const std::string&, const TrainConfig&);
template LinkWeights<float> load_links<float>(const Checkpoint&);
template LinkWeights<double> load_links<double>(const Checkpoint&);

}  // namespace aal
