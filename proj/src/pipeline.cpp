#include "probsal/pipeline.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <zlib.h>

#include "probsal/baselines.hpp"
#include "probsal/error.hpp"
#include "probsal/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace probsal {

// ---- configuration ------------------------------------------------------

std::string to_string(AnnotationStrategy s) {
  switch (s) {
    case AnnotationStrategy::Uniform: return "uniform";
    case AnnotationStrategy::GtOnly: return "gt-only";
    case AnnotationStrategy::RoundRobin: return "round-robin";
  }
  return "?";
}

AnnotationStrategy annotation_strategy_from_string(const std::string& s) {
  if (s == "uniform") return AnnotationStrategy::Uniform;
  if (s == "gt-only") return AnnotationStrategy::GtOnly;
  if (s == "round-robin") return AnnotationStrategy::RoundRobin;
  throw InvalidArgument("unknown annotation strategy '" + s + "' (uniform | gt-only | round-robin)");
}

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.image_size = 64;
  c.lr = 2e-3;
  c.lr_decay_per_epoch = 0.99;
  c.epochs = 100;
  return c;
}

void validate(const TrainConfig& c) {
  require(c.lr > 0, "lr must be > 0");
  require(c.lr_decay_per_epoch > 0 && c.lr_decay_per_epoch <= 1, "lr_decay_per_epoch must be in (0, 1]");
  require(c.epochs >= 1, "epochs must be >= 1");
  require(c.batch >= 1, "batch must be >= 1");
  require(c.max_steps >= 0, "max_steps must be >= 0");
  require(c.momentum >= 0 && c.momentum < 1 && c.beta2 >= 0 && c.beta2 < 1, "Adam moment coefficients must be in [0, 1)");
  require(c.adam_eps > 0, "adam_eps must be > 0");
  check_input_size(c.image_size, c.image_size, "image_size");
  validate(c.loss);
  validate(model_config(c));
}

ModelConfig model_config(const TrainConfig& c) {
  ModelConfig m;
  m.encoder = c.encoder == EncoderVariant::Tiny ? EncoderConfig::tiny() : EncoderConfig::vgg16_shape();
  m.K = c.K;
  m.M = c.M;
  m.init_std = c.weight_init_std;
  m.variant = c.variant;
  return m;
}

namespace {

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
  return v;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw InvalidArgument("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void apply_override(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = unquote(raw);
  auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, v); };
  if (key == "lr") num(c.lr);
  else if (key == "lr_decay_per_epoch" || key == "lr_decay") num(c.lr_decay_per_epoch);
  else if (key == "epochs") num(c.epochs);
  else if (key == "batch") num(c.batch);
  else if (key == "image_size") num(c.image_size);
  else if (key == "momentum" || key == "beta1") num(c.momentum);
  else if (key == "beta2") num(c.beta2);
  else if (key == "adam_eps") num(c.adam_eps);
  else if (key == "weight_init_std") num(c.weight_init_std);
  else if (key == "K") num(c.K);
  else if (key == "M") num(c.M);
  else if (key == "seed") num(c.seed);
  else if (key == "max_steps") num(c.max_steps);
  else if (key == "encoder") c.encoder = encoder_variant_from_string(v);
  else if (key == "annotation_strategy") c.annotations = annotation_strategy_from_string(v);
  else if (key == "smooth_reduction") {
    if (v == "sum") c.smooth_reduction = Reduction::Sum;
    else if (v == "mean") c.smooth_reduction = Reduction::Mean;
    else throw InvalidArgument("smooth_reduction must be sum or mean");
  }
  else if (key == "lambda1") num(c.loss.lambda1);
  else if (key == "lambda2") num(c.loss.lambda2);
  else if (key == "alpha") num(c.loss.alpha);
  else if (key == "psi_eps") num(c.loss.psi_eps);
  else if (key == "smoothl1_beta") num(c.loss.smoothl1_beta);
  else if (key == "variant") c.variant.variant = variant_from_string(v);
  else if (key == "heads") num(c.variant.heads);
  else if (key == "dropout_rate") num(c.variant.dropout_rate);
  else if (key == "dropout_samples") num(c.variant.dropout_samples);
  else if (key == "manifest") c.manifest = v;
  else if (key == "out_dir") c.out_dir = v;
  else throw InvalidArgument("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw FormatError("config: sections are not supported ('" + key + "')");
    apply_override(base, key, node.data());
  }
  validate(base);
  return base;
}

TrainConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c = parse_config(ss.str());
  // Relative paths in the file are relative to the file.
  auto rebase = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (path.parent_path() / p).lexically_normal().string();
  };
  rebase(c.manifest);
  rebase(c.out_dir);
  return c;
}

std::string dump_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "lr = " << fmt(c.lr) << '\n'
     << "lr_decay_per_epoch = " << fmt(c.lr_decay_per_epoch) << '\n'
     << "epochs = " << c.epochs << '\n'
     << "batch = " << c.batch << '\n'
     << "image_size = " << c.image_size << '\n'
     << "momentum = " << fmt(c.momentum) << '\n'
     << "beta2 = " << fmt(c.beta2) << '\n'
     << "adam_eps = " << fmt(c.adam_eps) << '\n'
     << "weight_init_std = " << fmt(c.weight_init_std) << '\n'
     << "K = " << c.K << '\n'
     << "M = " << c.M << '\n'
     << "seed = " << c.seed << '\n'
     << "max_steps = " << c.max_steps << '\n'
     << "encoder = " << to_string(c.encoder) << '\n'
     << "annotation_strategy = " << to_string(c.annotations) << '\n'
     << "smooth_reduction = " << (c.smooth_reduction == Reduction::Sum ? "sum" : "mean") << '\n'
     << "lambda1 = " << fmt(c.loss.lambda1) << '\n'
     << "lambda2 = " << fmt(c.loss.lambda2) << '\n'
     << "alpha = " << fmt(c.loss.alpha) << '\n'
     << "psi_eps = " << fmt(c.loss.psi_eps) << '\n'
     << "smoothl1_beta = " << fmt(c.loss.smoothl1_beta) << '\n'
     << "variant = " << to_string(c.variant.variant) << '\n'
     << "heads = " << c.variant.heads << '\n'
     << "dropout_rate = " << fmt(c.variant.dropout_rate) << '\n'
     << "dropout_samples = " << c.variant.dropout_samples << '\n';
  if (!c.manifest.empty()) os << "manifest = \"" << c.manifest << "\"\n";
  if (!c.out_dir.empty()) os << "out_dir = \"" << c.out_dir << "\"\n";
  return os.str();
}

double lr_at_epoch(const TrainConfig& c, int epoch) {
  require(epoch >= 1, "epochs count from 1");
  double lr = c.lr;
  for (int e = 1; e < epoch; ++e) lr *= c.lr_decay_per_epoch;
  return lr;
}

std::vector<double> lr_schedule(const TrainConfig& c, int epochs) {
  std::vector<double> out;
  double lr = c.lr;
  for (int e = 0; e < epochs; ++e) {
    out.push_back(lr);
    lr *= c.lr_decay_per_epoch;
  }
  return out;
}

// ---- optimizer ----------------------------------------------------------

Adam::Adam(ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var->shape());
    v_.emplace_back(p.var->shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& node = *params_[i].var;
    if (!node.has_grad()) continue;
    const Tensor& g = node.grad();
    Tensor& w = node.mutable_value();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t k = 0; k < w.numel(); ++k) {
      m[k] = beta1_ * m[k] + (1 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1 - beta2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

// ---- training -----------------------------------------------------------

Checkpoint init_checkpoint(const TrainConfig& c) {
  validate(c);
  Rng rng(c.seed);
  Checkpoint ck;
  ck.config = c;
  ck.model = std::make_shared<Model>(model_config(c), rng);
  ck.rng_state = rng.state();
  return ck;
}

double probe_loss(const Model& model, const TrainConfig& c) {
  SynthConfig sc;
  sc.seed = 0x5EED;
  sc.count = 1;
  sc.size = c.image_size;
  const Scene scene = render_scene(sc, 0);
  const ModelInput in = make_input(scene.sample);
  Rng rng(7);
  ag::NoGradGuard guard;
  return model
      .forward_train(in, ag::constant(scene.sample.annotations[0]), c.loss, c.smooth_reduction, rng)
      .total->value()
      .item();
}

namespace {

void check_params_finite(const ParamList& params, int epoch) {
  for (const auto& p : params) {
    if (!p.var->value().all_finite()) {
      throw NumericError("parameter " + p.name + " became non-finite in epoch " + std::to_string(epoch));
    }
  }
}

json epoch_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"steps", e.steps}, {"lr", e.lr},      {"loss", e.loss},
          {"cvae", e.cvae},   {"depth", e.depth}, {"smooth", e.smooth}};
}

}  // namespace

TrainResult train(const std::vector<RgbdSample>& samples, const TrainConfig& c, const EpochCallback& on_epoch) {
  validate(c);
  require(!samples.empty(), "train: no samples");
  for (const auto& s : samples) {
    validate(s);
    require(s.height() == c.image_size && s.width() == c.image_size,
            s.id + ": size " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                " does not match image_size " + std::to_string(c.image_size));
  }
  Rng rng(c.seed);
  auto model = std::make_shared<Model>(model_config(c), rng);
  const ParamList params = model->params();
  Adam opt(params, c.momentum, c.beta2, c.adam_eps);

  std::vector<ModelInput> inputs;
  std::vector<std::vector<ag::Var>> targets;
  for (const auto& s : samples) {
    inputs.push_back(make_input(s));
    std::vector<ag::Var> ys;
    for (const auto& a : s.annotations) ys.push_back(ag::constant(a));
    targets.push_back(std::move(ys));
  }
  std::vector<int> visits(samples.size(), 0);
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  int step = 0;
  const bool by_steps = c.max_steps > 0;
  for (int epoch = 1; by_steps ? step < c.max_steps : epoch <= c.epochs; ++epoch) {
    const double lr = lr_at_epoch(c, epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (std::size_t b0 = 0; b0 < order.size() && !(by_steps && step >= c.max_steps); b0 += c.batch) {
      const std::size_t b1 = std::min(order.size(), b0 + std::size_t(c.batch));
      const double inv = 1.0 / double(b1 - b0);
      zero_grads(params);
      double loss = 0, cvae = 0, depth = 0, smooth = 0;
      for (std::size_t k = b0; k < b1; ++k) {
        const int i = order[k];
        const int na = int(targets[i].size());
        int a = 0;
        switch (c.annotations) {
          case AnnotationStrategy::Uniform: a = rng.uniform_int(0, na - 1); break;
          case AnnotationStrategy::GtOnly: a = 0; break;
          case AnnotationStrategy::RoundRobin: a = visits[i] % na; break;
        }
        ++visits[i];
        ForwardResult f = model->forward_train(inputs[i], targets[i][a], c.loss, c.smooth_reduction, rng);
        const double l = f.total->value().item();
        if (!std::isfinite(l)) {
          throw NumericError("non-finite loss at step " + std::to_string(step + 1) + " (sample " + samples[i].id + ")");
        }
        ag::backward(ag::scale(f.total, inv));
        loss += l * inv;
        cvae += f.terms.cvae->value().item() * inv;
        if (f.terms.depth) depth += f.terms.depth->value().item() * inv;
        smooth += f.terms.smooth->value().item() * inv;
      }
      opt.step(lr);
      ++step;
      result.step_losses.push_back(loss);
      log.loss += loss;
      log.cvae += cvae;
      log.depth += depth;
      log.smooth += smooth;
      ++log.steps;
    }
    if (log.steps > 0) {
      log.loss /= log.steps;
      log.cvae /= log.steps;
      log.depth /= log.steps;
      log.smooth /= log.steps;
    }
    check_params_finite(params, epoch);
    result.epochs.push_back(log);
    result.checkpoint.epoch = epoch;
    if (on_epoch) on_epoch(log);
  }
  result.final_loss = result.step_losses.empty() ? 0.0 : result.step_losses.back();
  result.checkpoint.config = c;
  result.checkpoint.model = model;
  result.checkpoint.rng_state = rng.state();
  result.checkpoint.probe_loss = probe_loss(*model, c);
  return result;
}

TrainResult train(const DatasetManifest& m, const TrainConfig& c, const EpochCallback& on_epoch) {
  validate(c);
  const auto samples = load_all(m, c.image_size);
  if (c.out_dir.empty()) return train(samples, c, on_epoch);

  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  std::ofstream log(dir / "log.jsonl");
  if (!log) throw IoError("cannot write " + (dir / "log.jsonl").string());
  TrainResult r = train(samples, c, [&](const EpochLog& e) {
    log << epoch_json(e).dump() << '\n' << std::flush;
    if (on_epoch) on_epoch(e);
  });
  save_checkpoint(r.checkpoint, dir / "checkpoint.bin");
  return r;
}

// ---- sampling -----------------------------------------------------------

Tensor refined_depth(const Model& model, const RgbdSample& sample) {
  ag::NoGradGuard guard;
  return model.refine_depth(make_input(sample))->value();
}

PredictionSet sample_predictions(const Model& model, const RgbdSample& sample, int C, Rng& rng,
                                 const SampleOptions& opt) {
  require(C >= 1, "sample_predictions: C must be >= 1");
  const Variant v = model.config().variant.variant;
  if (v == Variant::McDropout) return mcdropout_sample(model, sample, C, model.config().variant.dropout_rate, rng);

  ag::NoGradGuard guard;
  const ModelInput in = make_input(sample);
  const int H = sample.height(), W = sample.width();
  const ag::Var sd = model.features(in, model.refine_depth(in));
  std::vector<Tensor> gray;
  if (v == Variant::MHead) {
    const ag::Var ss = model.zero_latent_map(sd);
    for (int c = 0; c < C; ++c) gray.push_back(ag::sigmoid(model.predict(sd, ss, c % model.heads(), H, W))->value());
  } else {
    const GaussianLatent prior = model.prior(in);
    const int h = sd->shape().h, w = sd->shape().w;
    for (int c = 0; c < C; ++c) {
      Tensor noise = draw_noise(1, prior.K(), h, w, rng);
      noise *= opt.noise_scale;
      gray.push_back(ag::sigmoid(model.predict(sd, expand(prior, noise), 0, H, W))->value());
    }
  }
  return consensus(std::move(gray));
}

PredictionSet sample_predictions(const Checkpoint& ckpt, const RgbdSample& sample, int C, Rng& rng,
                                 const SampleOptions& opt) {
  require(ckpt.model != nullptr, "checkpoint without model");
  return sample_predictions(*ckpt.model, sample, C, rng, opt);
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'S', 'A', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw FormatError("checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  return std::uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(data), uInt(n)));
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  require(c.model != nullptr, "save_checkpoint: no model");
  const ParamList params = c.model->params();
  json header;
  header["config"] = dump_config(c.config);
  header["epoch"] = c.epoch;
  header["rng_state"] = c.rng_state;
  header["probe_loss"] = c.probe_loss;
  header["permutation"] = c.model->permutation().r;
  json tensors = json::array();
  for (const auto& p : params) {
    const Shape s = p.var->shape();
    tensors.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  header["tensors"] = tensors;
  const std::string h = header.dump();

  std::string buf(kMagic, sizeof kMagic);
  put(buf, kCheckpointVersion);
  put(buf, std::uint64_t(h.size()));
  buf += h;
  for (const auto& p : params) {
    const Tensor& t = p.var->value();
    buf.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double));
  }
  put(buf, crc_of(buf.data(), buf.size()));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (buf.size() < sizeof kMagic + 16 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(where + "not a checkpoint file");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(buf, pos);
  if (version != kCheckpointVersion) {
    throw FormatError(where + "checkpoint version " + std::to_string(version) + ", this build reads version " +
                      std::to_string(kCheckpointVersion));
  }
  std::size_t crc_pos = buf.size() - sizeof(std::uint32_t);
  const auto stored_crc = get<std::uint32_t>(buf, crc_pos);
  if (stored_crc != crc_of(buf.data(), buf.size() - sizeof(std::uint32_t))) {
    throw FormatError(where + "checksum mismatch (file corrupted)");
  }
  const auto hlen = get<std::uint64_t>(buf, pos);
  if (hlen > buf.size() - pos) throw FormatError(where + "header length out of range");
  json header;
  try {
    header = json::parse(buf.substr(pos, hlen));
  } catch (const json::exception& e) {
    throw FormatError(where + "bad header: " + e.what());
  }
  pos += hlen;

  Checkpoint c;
  try {
    c.config = parse_config(header.at("config").get<std::string>());
    c.epoch = header.at("epoch").get<int>();
    c.rng_state = header.at("rng_state").get<std::string>();
    c.probe_loss = header.at("probe_loss").get<double>();
    Rng rng(c.config.seed);
    c.model = std::make_shared<Model>(model_config(c.config), rng);
    c.model->permutation().r = header.at("permutation").get<std::vector<int>>();
    if (!c.model->permutation().valid() || int(c.model->permutation().r.size()) != c.config.K + c.config.M) {
      throw FormatError(where + "invalid channel permutation");
    }
    const ParamList params = c.model->params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) throw FormatError(where + "tensor count does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto sh = tensors[i].at("shape").get<std::vector<int>>();
      const Shape s = params[i].var->shape();
      if (tensors[i].at("name").get<std::string>() != params[i].name || sh != std::vector<int>{s.n, s.c, s.h, s.w}) {
        throw FormatError(where + "tensor " + std::to_string(i) + " does not match parameter " + params[i].name);
      }
      Tensor& t = params[i].var->mutable_value();
      const std::size_t bytes = t.numel() * sizeof(double);
      if (pos + bytes > buf.size() - sizeof(std::uint32_t)) {
        throw FormatError(where + "tensor data truncated");
      }
      std::memcpy(t.data(), buf.data() + pos, bytes);
      pos += bytes;
    }
  } catch (const json::exception& e) {
    throw FormatError(where + "bad header: " + e.what());
  }
  if (pos != buf.size() - sizeof(std::uint32_t)) throw FormatError(where + "trailing bytes after tensor data");
  return c;
}

// ---- model-backed oracle ------------------------------------------------

Tensor ModelOracle::predict(const RgbdSample& base, const Tensor& rgb, int) const {
  const int n = ckpt_.config.image_size;
  RgbdSample s;
  s.id = base.id;
  s.rgb = rgb;
  s.depth = base.depth;
  s.annotations = {Tensor::map(base.height(), base.width())};
  if (base.height() != n || base.width() != n) {
    s.rgb = io::resize(rgb, n, n);
    s.depth = io::resize(base.depth, n, n);
    s.annotations = {Tensor::map(n, n)};
  }
  Rng rng(0);
  PredictionSet p = sample_predictions(ckpt_, s, 1, rng, {.noise_scale = 0.0});
  Tensor out = std::move(p.gray[0]);
  if (out.h() != base.height() || out.w() != base.width()) out = io::resize(out, base.height(), base.width());
  for (auto& v : out.vec()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::unique_ptr<SaliencyOracle> make_oracle(const std::string& spec, const Rgb& mean_rgb) {
  if (spec == "synthetic" || spec == "synthetic_rank") return std::make_unique<SyntheticRankOracle>(mean_rgb);
  if (spec.rfind("files:", 0) == 0) return std::make_unique<FilePredictionOracle>(spec.substr(6));
  if (spec.rfind("model:", 0) == 0) return std::make_unique<ModelOracle>(load_checkpoint(spec.substr(6)));
  throw InvalidArgument("unknown oracle '" + spec + "' (synthetic | files:DIR | model:CKPT)");
}

}  // namespace probsal
