#include "trice/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "trice/errors.hpp"

namespace trice {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::basic: return "basic";
    case EstimatorKind::cv: return "cv";
    case EstimatorKind::cv_subsampled: return "cv_subsampled";
    case EstimatorKind::debiased: return "debiased";
  }
  throw DomainError("bad estimator kind");
}

std::string to_string(MemoryInitMode mode) {
  return mode == MemoryInitMode::guide ? "guide" : "prior";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::trice: return "trice";
    case Method::star: return "star";
    case Method::rs: return "rs";
    case Method::rws: return "rws";
    case Method::direct: return "direct";
    case Method::cot: return "cot";
  }
  throw DomainError("bad method");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::constant ? "constant" : "cosine";
}

std::string to_string(LikelihoodModel::Kind kind) {
  return kind == LikelihoodModel::Kind::binary ? "binary" : "smoothed";
}

Method method_from_string(const std::string& name) {
  if (name == "trice") return Method::trice;
  if (name == "star") return Method::star;
  if (name == "rs") return Method::rs;
  if (name == "rws") return Method::rws;
  if (name == "direct") return Method::direct;
  if (name == "cot") return Method::cot;
  throw ValidationError("unknown method: " + name);
}

namespace {

EstimatorKind estimator_from_string(const std::string& name) {
  if (name == "basic") return EstimatorKind::basic;
  if (name == "cv") return EstimatorKind::cv;
  if (name == "cv_subsampled") return EstimatorKind::cv_subsampled;
  if (name == "debiased") return EstimatorKind::debiased;
  throw ValidationError("unknown estimator: " + name);
}

MemoryInitMode memory_init_from_string(const std::string& name) {
  if (name == "guide") return MemoryInitMode::guide;
  if (name == "prior") return MemoryInitMode::prior;
  throw ValidationError("unknown memory_init mode: " + name);
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer: " + name);
}

ScheduleKind schedule_from_string(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ValidationError("unknown schedule: " + name);
}

LikelihoodModel::Kind likelihood_from_string(const std::string& name) {
  if (name == "binary") return LikelihoodModel::Kind::binary;
  if (name == "smoothed") return LikelihoodModel::Kind::smoothed;
  throw ValidationError("unknown likelihood kind: " + name);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "task",          "b",
      "question_count", "k_total",
      "t_max",         "answer_count",
      "modsum_base",   "likelihood",
      "epsilon",       "hard_fraction",
      "hard_bias",     "easy_boost",
      "init_eos_logit", "seed",
      "steps",         "minibatch",
      "grad_batch",    "estimator",
      "guide_lambda",  "memory_init",
      "optimizer",     "lr",
      "adam_beta1",    "adam_beta2",
      "adam_eps",      "schedule",
      "schedule_decay", "schedule_horizon",
      "sc_samples",    "enum_cap",
      "eval_every",    "kl_split",
      "rs_particles",  "rws_guide_lr",
      "star_outer",
      "star_inner0",   "star_inner_cap",
      "star_growth",   "star_break_nll"};
  return keys;
}

std::size_t get_size(const nlohmann::json& j, const std::string& key,
                     std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer() || j.at(key).get<std::int64_t>() < 0)
    throw ValidationError("config key '" + key +
                          "' must be a non-negative integer");
  return j.at(key).get<std::size_t>();
}

double get_real(const nlohmann::json& j, const std::string& key,
                double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number())
    throw ValidationError("config key '" + key + "' must be a number");
  return j.at(key).get<double>();
}

std::string get_string(const nlohmann::json& j, const std::string& key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string())
    throw ValidationError("config key '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

}  // namespace

void RunConfig::validate() const {
  if (steps < 1) throw ValidationError("steps must be at least 1");
  if (minibatch < 1) throw ValidationError("minibatch must be at least 1");
  if (effective_grad_batch() < 1)
    throw ValidationError("grad_batch must be at least 1");
  if (sc_samples < 1) throw ValidationError("sc_samples must be at least 1");
  if (eval_every < 1) throw ValidationError("eval_every must be at least 1");
  if (task.t_max < 1) throw ValidationError("t_max must be at least 1");
  if (task.k_total < task.answer_count + 1)
    throw ValidationError("k_total must cover EOS plus the answer symbols");
  if (!(guide_lambda >= 0.0 && guide_lambda <= 1.0))
    throw ValidationError("guide_lambda must lie in [0,1]");
  if (!(task.likelihood.epsilon >= 0.0 && task.likelihood.epsilon < 1.0))
    throw ValidationError("epsilon must lie in [0,1)");
  if (!(opt.lr > 0.0)) throw ValidationError("lr must be positive");
  if (rs_particles < 1)
    throw ValidationError("rs_particles must be at least 1");
  if (!(rws_guide_lr >= 0.0))
    throw ValidationError("rws_guide_lr must be non-negative");
  if (star_outer < 1 || star_inner0 < 1 || star_inner_cap < 1)
    throw ValidationError("STaR loop sizes must be at least 1");
  if (!(star_growth >= 1.0))
    throw ValidationError("star_growth must be at least 1");
  if (!(star_break_nll > 0.0))
    throw ValidationError("star_break_nll must be positive");
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config root must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known_keys().contains(key))
      throw ValidationError("unknown config key: " + key);
  }
  if (!j.contains("seed"))
    throw ValidationError("config requires an explicit seed");

  RunConfig cfg;
  cfg.task.name = get_string(j, "task", cfg.task.name);
  cfg.task.bits = get_size(j, "b", cfg.task.bits);
  cfg.task.question_count =
      get_size(j, "question_count", cfg.task.question_count);
  cfg.task.k_total = get_size(j, "k_total", cfg.task.k_total);
  cfg.task.t_max = get_size(j, "t_max", cfg.task.t_max);
  cfg.task.answer_count = get_size(j, "answer_count", cfg.task.answer_count);
  cfg.task.modsum_base = get_size(j, "modsum_base", cfg.task.modsum_base);
  cfg.task.likelihood.kind =
      likelihood_from_string(get_string(j, "likelihood", "binary"));
  cfg.task.likelihood.epsilon = get_real(j, "epsilon", 0.0);
  cfg.task.hard_fraction = get_real(j, "hard_fraction", cfg.task.hard_fraction);
  cfg.task.hard_bias = get_real(j, "hard_bias", cfg.task.hard_bias);
  cfg.task.easy_boost = get_real(j, "easy_boost", cfg.task.easy_boost);
  cfg.task.init_eos_logit =
      get_real(j, "init_eos_logit", cfg.task.init_eos_logit);

  if (!j.at("seed").is_number_integer() ||
      j.at("seed").get<std::int64_t>() < 0)
    throw ValidationError("seed must be a non-negative integer");
  cfg.seed = j.at("seed").get<std::uint64_t>();

  cfg.steps = get_size(j, "steps", cfg.steps);
  cfg.minibatch = get_size(j, "minibatch", cfg.minibatch);
  cfg.grad_batch = get_size(j, "grad_batch", cfg.grad_batch);
  cfg.estimator =
      estimator_from_string(get_string(j, "estimator", "cv_subsampled"));
  cfg.guide_lambda = get_real(j, "guide_lambda", cfg.guide_lambda);
  cfg.memory_init =
      memory_init_from_string(get_string(j, "memory_init", "guide"));
  cfg.opt.kind = optimizer_from_string(get_string(j, "optimizer", "adam"));
  cfg.opt.lr = get_real(j, "lr", cfg.opt.lr);
  cfg.opt.adam_beta1 = get_real(j, "adam_beta1", cfg.opt.adam_beta1);
  cfg.opt.adam_beta2 = get_real(j, "adam_beta2", cfg.opt.adam_beta2);
  cfg.opt.adam_eps = get_real(j, "adam_eps", cfg.opt.adam_eps);
  cfg.opt.schedule = schedule_from_string(get_string(j, "schedule", "constant"));
  cfg.opt.schedule_decay =
      get_real(j, "schedule_decay", cfg.opt.schedule_decay);
  cfg.opt.schedule_horizon =
      get_size(j, "schedule_horizon", cfg.opt.schedule_horizon);
  cfg.sc_samples = get_size(j, "sc_samples", cfg.sc_samples);
  cfg.enum_cap = get_size(j, "enum_cap", cfg.enum_cap);
  cfg.eval_every = get_size(j, "eval_every", cfg.eval_every);
  cfg.kl_split = get_size(j, "kl_split", cfg.kl_split);
  cfg.rs_particles = get_size(j, "rs_particles", cfg.rs_particles);
  cfg.rws_guide_lr = get_real(j, "rws_guide_lr", cfg.rws_guide_lr);
  cfg.star_outer = get_size(j, "star_outer", cfg.star_outer);
  cfg.star_inner0 = get_size(j, "star_inner0", cfg.star_inner0);
  cfg.star_inner_cap = get_size(j, "star_inner_cap", cfg.star_inner_cap);
  cfg.star_growth = get_real(j, "star_growth", cfg.star_growth);
  cfg.star_break_nll = get_real(j, "star_break_nll", cfg.star_break_nll);

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const RunConfig& config) {
  nlohmann::json j;
  j["task"] = config.task.name;
  j["b"] = config.task.bits;
  j["question_count"] = config.task.question_count;
  j["k_total"] = config.task.k_total;
  j["t_max"] = config.task.t_max;
  j["answer_count"] = config.task.answer_count;
  j["modsum_base"] = config.task.modsum_base;
  j["likelihood"] = to_string(config.task.likelihood.kind);
  j["epsilon"] = config.task.likelihood.epsilon;
  j["hard_fraction"] = config.task.hard_fraction;
  j["hard_bias"] = config.task.hard_bias;
  j["easy_boost"] = config.task.easy_boost;
  j["init_eos_logit"] = config.task.init_eos_logit;
  j["seed"] = config.seed;
  j["steps"] = config.steps;
  j["minibatch"] = config.minibatch;
  j["grad_batch"] = config.effective_grad_batch();
  j["estimator"] = to_string(config.estimator);
  j["guide_lambda"] = config.guide_lambda;
  j["memory_init"] = to_string(config.memory_init);
  j["optimizer"] = to_string(config.opt.kind);
  j["lr"] = config.opt.lr;
  j["adam_beta1"] = config.opt.adam_beta1;
  j["adam_beta2"] = config.opt.adam_beta2;
  j["adam_eps"] = config.opt.adam_eps;
  j["schedule"] = to_string(config.opt.schedule);
  j["schedule_decay"] = config.opt.schedule_decay;
  j["schedule_horizon"] = config.opt.schedule_horizon;
  j["sc_samples"] = config.sc_samples;
  j["enum_cap"] = config.enum_cap;
  j["eval_every"] = config.eval_every;
  j["kl_split"] = config.kl_split;
  j["rs_particles"] = config.rs_particles;
  j["rws_guide_lr"] = config.rws_guide_lr;
  j["star_outer"] = config.star_outer;
  j["star_inner0"] = config.star_inner0;
  j["star_inner_cap"] = config.star_inner_cap;
  j["star_growth"] = config.star_growth;
  j["star_break_nll"] = config.star_break_nll;
  return j;
}

std::string canonical_config_string(const RunConfig& config) {
  // nlohmann::json objects iterate in key-sorted order, so dump() is the
  // canonical form.
  return config_to_json(config).dump(2) + "\n";
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return canonical_config_string(a) == canonical_config_string(b);
}

}  // namespace trice
