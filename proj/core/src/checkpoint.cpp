#include <fstream>

#include "json_io.hpp"
#include "uspil/model.hpp"

namespace uspil {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json breakdown_to_json(const LossBreakdown& b) {
  ordered_json j;
  for (int k = 0; k < kNumLossComponents; ++k)
    j[std::string(kLossComponentNames[static_cast<std::size_t>(k)])] = b.raw_of(k);
  j["total"] = b.total;
  ordered_json w;
  for (int k = 0; k < kNumLossComponents; ++k)
    w[std::string(kLossComponentNames[static_cast<std::size_t>(k)])] = b.weights[k];
  w["adapt_exponent"] = b.weights.adapt_exponent;
  j["weights"] = w;
  j["epoch"] = b.epoch;
  return j;
}

LossBreakdown breakdown_from_json(const ordered_json& j) {
  LossBreakdown b;
  for (int k = 0; k < kNumLossComponents; ++k)
    b.raw[static_cast<std::size_t>(k)] =
        j.at(std::string(kLossComponentNames[static_cast<std::size_t>(k)])).get<double>();
  b.total = j.at("total").get<double>();
  const auto& w = j.at("weights");
  for (int k = 0; k < kNumLossComponents; ++k)
    b.weights.set(k, w.at(std::string(kLossComponentNames[static_cast<std::size_t>(k)])).get<double>());
  b.weights.adapt_exponent = w.at("adapt_exponent").get<double>();
  b.epoch = j.at("epoch").get<long>();
  return b;
}

}  // namespace

void save_checkpoint(const NetworkCheckpoint& ckpt, const std::filesystem::path& file) {
  const Network& net = ckpt.network;
  const NetworkSpec& spec = net.spec();
  ordered_json j;
  ordered_json js;
  js["input_dim"] = spec.input_dim;
  js["embed_dim"] = spec.embed_dim;
  js["hidden"] = spec.hidden;
  js["output_dim"] = spec.output_dim;
  js["seed"] = spec.seed;
  if (spec.normalized()) {
    js["input_lo"] = spec.input_lo;
    js["input_hi"] = spec.input_hi;
  }
  j["spec"] = js;

  ordered_json layers = ordered_json::array();
  std::span<const double> p = net.params();
  for (const LayerLayout& L : net.layout().layers) {
    ordered_json jl;
    ordered_json rows = ordered_json::array();
    for (int i = 0; i < L.out; ++i) {
      ordered_json row = ordered_json::array();
      for (int k = 0; k < L.in; ++k)
        row.push_back(p[L.w_off + static_cast<std::size_t>(i * L.in + k)]);
      rows.push_back(std::move(row));
    }
    jl["w"] = std::move(rows);
    ordered_json bias = ordered_json::array();
    for (int i = 0; i < L.out; ++i) bias.push_back(p[L.b_off + static_cast<std::size_t>(i)]);
    jl["b"] = std::move(bias);
    if (L.act_off >= 0) {
      const double* a = &p[static_cast<std::size_t>(L.act_off)];
      ordered_json ja;
      ja["a"] = a[0];
      ja["b"] = a[1];
      ja["c"] = a[2];
      ja["d"] = a[3];
      ja["e"] = a[4];
      jl["act"] = std::move(ja);
    }
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);

  ordered_json meta;
  meta["epoch"] = ckpt.meta.epoch;
  if (ckpt.meta.final_loss) meta["final_loss"] = breakdown_to_json(*ckpt.meta.final_loss);
  j["meta"] = std::move(meta);

  detail::write_json_file(j, file);
}

NetworkCheckpoint load_checkpoint(const std::filesystem::path& file) {
  const ordered_json j = detail::read_json_file(file);
  try {
    NetworkSpec spec;
    const auto& js = j.at("spec");
    spec.input_dim = js.at("input_dim").get<int>();
    spec.embed_dim = js.at("embed_dim").get<int>();
    spec.hidden = js.at("hidden").get<std::vector<int>>();
    spec.output_dim = js.at("output_dim").get<int>();
    spec.seed = js.at("seed").get<std::uint64_t>();
    if (js.contains("input_lo")) {
      spec.input_lo = js.at("input_lo").get<std::vector<double>>();
      spec.input_hi = js.at("input_hi").get<std::vector<double>>();
    }

    const NetworkLayout lay = build_layout(spec);
    std::vector<double> params(lay.n_params, 0.0);
    const auto& layers = j.at("layers");
    if (layers.size() != lay.layers.size())
      throw ConfigError("checkpoint layer count mismatch");
    for (std::size_t li = 0; li < lay.layers.size(); ++li) {
      const LayerLayout& L = lay.layers[li];
      const auto& jl = layers[li];
      const auto& rows = jl.at("w");
      for (int i = 0; i < L.out; ++i)
        for (int k = 0; k < L.in; ++k)
          params[L.w_off + static_cast<std::size_t>(i * L.in + k)] =
              rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
      const auto& bias = jl.at("b");
      for (int i = 0; i < L.out; ++i)
        params[L.b_off + static_cast<std::size_t>(i)] = bias.at(static_cast<std::size_t>(i)).get<double>();
      if (L.act_off >= 0) {
        const auto& ja = jl.at("act");
        double* a = &params[static_cast<std::size_t>(L.act_off)];
        a[0] = ja.at("a").get<double>();
        a[1] = ja.at("b").get<double>();
        a[2] = ja.at("c").get<double>();
        a[3] = ja.at("d").get<double>();
        a[4] = ja.at("e").get<double>();
      }
    }

    NetworkCheckpoint ckpt{Network(spec, std::move(params)), CheckpointMeta{}};
    const auto& meta = j.at("meta");
    ckpt.meta.epoch = meta.at("epoch").get<long>();
    if (meta.contains("final_loss"))
      ckpt.meta.final_loss = breakdown_from_json(meta.at("final_loss"));
    return ckpt;
  } catch (const ordered_json::exception& e) {
    throw ConfigError("malformed checkpoint " + file.string() + ": " + e.what());
  }
}

}  // namespace uspil
