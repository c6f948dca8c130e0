#include "memmamba/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "memmamba/runconfig.hpp"

namespace memmamba::checkpoint {

using nlohmann::json;

void save(const std::filesystem::path& dir, const model::ModelConfig& cfg,
          const model::Weights& w) {
  std::filesystem::create_directories(dir / "tensors");
  json manifest;
  manifest["format"] = 1;
  manifest["kind"] = "memmamba-checkpoint";
  manifest["config"] = cli::model_config_to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["tensors"] = w.names;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw InputError("cannot write checkpoint manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
  for (std::size_t i = 0; i < w.count(); ++i)
    save_tensor(dir / "tensors" / (w.names[i] + ".mmt"), w.values[i]);
}

Checkpoint load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw InputError("missing checkpoint manifest: " + (dir / "manifest.json").string());
  json manifest = json::parse(is);
  if (manifest.value("kind", "") != "memmamba-checkpoint")
    throw InputError("not a checkpoint directory: " + dir.string());

  Checkpoint ck;
  ck.config = cli::model_config_from_json(manifest.at("config"));
  ck.config.seed = manifest.value("seed", ck.config.seed);
  for (const auto& name : manifest.at("tensors")) {
    const std::string n = name.get<std::string>();
    ck.weights.add(n, load_tensor(dir / "tensors" / (n + ".mmt")));
  }
  return ck;
}

}  // namespace memmamba::checkpoint
