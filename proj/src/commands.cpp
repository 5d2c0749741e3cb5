#include "mncd/commands.hpp"

#include <fstream>
#include <iostream>

#include "mncd/checkpoint.hpp"
#include "mncd/image_io.hpp"
#include "mncd/registry.hpp"
#include "mncd/training.hpp"

namespace mncd {
namespace fs = std::filesystem;

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kExitConfig;
  } catch (const DataError&) {
    return kExitData;
  } catch (const NumericError&) {
    return kExitNumeric;
  } catch (const CheckpointError&) {
    return kExitCheckpoint;
  } catch (...) {
    return kExitFailure;
  }
}

std::vector<BinaryMap> predict_maps(ChangeDetector& model, const std::vector<SamplePair>& samples,
                                    std::int64_t batch_size) {
  std::vector<BinaryMap> maps;
  maps.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const Batch batch = stack_batch(samples, idx, model.dtype());
    const Tensor prob = model.predict(batch.image_a, batch.image_b);
    const std::int64_t h = prob.dim(2), w = prob.dim(3);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      BinaryMap m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w))};
      const auto offset = static_cast<std::int64_t>(k) * h * w;
      for (std::int64_t p = 0; p < h * w; ++p) {
        m.values[static_cast<std::size_t>(p)] = prob.at(offset + p) >= 0.5 ? 1 : 0;
      }
      maps.push_back(std::move(m));
    }
  }
  return maps;
}

ConfusionCounts evaluate_counts(ChangeDetector& model, const std::vector<SamplePair>& samples,
                                std::int64_t batch_size) {
  const auto maps = predict_maps(model, samples, batch_size);
  ConfusionCounts total;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += confusion_counts(maps[i], BinaryMap::from_tensor(samples[i].mask));
  }
  return total;
}

namespace {

std::vector<SamplePair> load_split_or_throw(const Dataset& data, Split split) {
  auto samples = data.load_split(split);
  if (samples.empty()) {
    throw DataError(data.root().string() + ": split '" + split_name(split) + "' is empty");
  }
  return samples;
}

fs::path checkpoint_path(const ExperimentConfig& config, const CommandOptions& options) {
  return options.checkpoint ? *options.checkpoint : fs::path(config.output_dir) / "checkpoint.bin";
}

std::unique_ptr<ChangeDetector> load_trained(const ExperimentConfig& config,
                                             const CommandOptions& options) {
  const fs::path path = checkpoint_path(config, options);
  if (!fs::exists(path)) throw CheckpointError(path.string() + ": checkpoint not found");
  const Checkpoint ck = checkpoint_load(path);
  auto model = build_model(config);
  apply_checkpoint(ck, *model);
  return model;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(path.string() + ": cannot write");
  f << text;
}

}  // namespace

int run_train(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out) {
  const Dataset data = open_dataset(config);
  const auto samples = load_split_or_throw(data, Split::train);
  auto model = build_model(config);
  AdamState state;
  if (options.checkpoint) {
    apply_checkpoint(checkpoint_load(*options.checkpoint), *model, &state);
  }

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const std::string config_json = config.to_json();
  write_text(dir / "config.json", config_json + "\n");
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw Error((dir / "train_log.jsonl").string() + ": cannot write");

  out << "training " << config.model_id << " on " << samples.size() << " pairs for "
      << config.train.total_steps << " steps\n";
  const auto every = std::max<std::int64_t>(1, config.train.total_steps / 10);
  fit(*model, samples, config.train, state, [&](const StepLog& s) {
    log << s.to_json() << '\n';
    if ((s.step + 1) % every == 0 || s.step + 1 == config.train.total_steps) {
      out << "step " << s.step + 1 << "/" << config.train.total_steps << " loss " << s.loss
          << " lr " << s.lr << '\n';
    }
  });
  log.close();
  checkpoint_save(dir / "checkpoint.bin", *model, &state, config_json, state.t);
  out << "wrote " << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

int run_eval(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out) {
  const Split split = parse_split(options.split);
  const Dataset data = open_dataset(config);
  const auto samples = load_split_or_throw(data, split);
  auto model = load_trained(config, options);
  const auto counts = evaluate_counts(*model, samples, config.train.batch_size);
  const std::string report = compute_metrics(counts).to_json();
  out << report << '\n';
  write_text(fs::path(config.output_dir) / ("metrics_" + options.split + ".json"), report + "\n");
  return kExitOk;
}

int run_predict(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out) {
  const Split split = parse_split(options.split);
  const Dataset data = open_dataset(config);
  const auto samples = load_split_or_throw(data, split);
  auto model = load_trained(config, options);
  const auto maps = predict_maps(*model, samples, config.train.batch_size);
  const fs::path dir = fs::path(config.output_dir) / "predictions";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Image8 img{maps[i].height, maps[i].width, 1, maps[i].values};
    for (auto& v : img.pixels) v = v ? 255 : 0;
    write_png(dir / samples[i].site_id / (samples[i].patch_id + ".png"), img);
  }
  out << "wrote " << samples.size() << " change maps to " << dir.string() << '\n';
  return kExitOk;
}

int run_render(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out) {
  const Split split = parse_split(options.split);
  const Dataset data = open_dataset(config);
  const auto samples = load_split_or_throw(data, split);
  auto model = load_trained(config, options);
  const auto maps = predict_maps(*model, samples, config.train.batch_size);
  const fs::path dir = fs::path(config.output_dir) / "renders";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RgbImage rgb = render_change_map(maps[i], BinaryMap::from_tensor(samples[i].mask));
    write_png(dir / samples[i].site_id / (samples[i].patch_id + ".png"),
              {rgb.height, rgb.width, 3, rgb.pixels});
  }
  out << "wrote " << samples.size() << " renders to " << dir.string() << '\n';
  return kExitOk;
}

int run_gradcheck(const gradcheck::Options& options, std::ostream& out) {
  bool ok = true;
  std::int64_t total = 0;
  for (const auto& r : gradcheck::run_suite(options)) {
    total += r.checked;
    ok = ok && r.passed();
    out << (r.passed() ? "ok   " : "FAIL ") << r.name << ": " << r.checked << " entries, max rel "
        << r.max_rel_error;
    if (!r.passed()) out << " (" << r.failures << " over tolerance; worst " << r.worst << ")";
    out << '\n';
  }
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (" << total << " entries, tolerance "
      << options.tolerance << ")\n";
  return ok ? kExitOk : kExitGradcheck;
}

}  // namespace mncd
