// Copyright 2026 the voxfv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voxfv/voxfv.hpp"

namespace fs = std::filesystem;
using namespace voxfv;

namespace {

Json load_config_or_empty(const std::string& path) {
  if (path.empty()) return Json::object();
  return load_json(path);
}

// Per-utterance frame features written as <out>/<id>.fmx.
void cmd_features(const std::string& manifest_path, const std::string& kind_name,
                  bool no_vad, const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path);
  const FeatureKind kind = feature_kind_from_name(kind_name);
  fs::create_directories(out_dir);
  for (const auto& rec : manifest.records) {
    const FrameMatrix fm = features_for_record(rec, kind, !no_vad);
    write_fmx((fs::path(out_dir) / (rec.id + ".fmx")).string(), fm);
  }
  std::cout << "wrote " << manifest.records.size() << " feature files to " << out_dir
            << "\n";
}

std::vector<FrameMatrix> load_feature_files(const Manifest& manifest,
                                            const std::string& dir) {
  std::vector<FrameMatrix> out;
  out.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    FrameMatrix fm = read_fmx((fs::path(dir) / (rec.id + ".fmx")).string());
    fm.utterance_id = rec.id;
    out.push_back(std::move(fm));
  }
  return out;
}

// Stacks one-row encodings (Fisher vectors or embeddings) in manifest order.
Mat stack_encodings(const Manifest& manifest, const std::string& dir) {
  Mat x;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const FrameMatrix fm =
        read_fmx((fs::path(dir) / (manifest.records[i].id + ".fmx")).string());
    require(fm.num_frames() == 1, ErrorKind::kShape,
            "expected a one-row encoding for '" + manifest.records[i].id + "'");
    if (i == 0) x.resize(static_cast<int>(manifest.records.size()), fm.dim());
    require(fm.dim() == x.cols(), ErrorKind::kShape,
            "encoding dim mismatch for '" + manifest.records[i].id + "'");
    x.row(static_cast<int>(i)) = fm.data.row(0);
  }
  return x;
}

void cmd_train_ubm(const std::string& manifest_path, const std::string& features_dir,
                   int components, std::uint64_t seed, const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path, false);
  const std::vector<FrameMatrix> features = load_feature_files(manifest, features_dir);
  const Mat pooled = pool_split_frames(features, manifest, {"train", "devel"});
  EmOptions opts;
  opts.seed = mix_seed(seed, 0x9bULL);
  opts.log = &std::cout;
  const EmResult result = em_fit(pooled, components, opts);
  fs::create_directories(out_dir);
  save_json((fs::path(out_dir) / "ubm.json").string(), gmm_to_json(result.model));
  std::cout << "ubm: " << components << " components, final mean LL "
            << result.ll_trace.back() << "\n";
}

void cmd_encode_fv(const std::string& manifest_path, const std::string& features_dir,
                   const std::string& ubm_path, double alpha, bool no_weight_block,
                   const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path, false);
  const GmmModel ubm = gmm_from_json(load_json(ubm_path));
  const std::vector<FrameMatrix> features = load_feature_files(manifest, features_dir);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FisherVector fv =
        encode_fv_normalized(ubm, features[i], !no_weight_block, alpha);
    Mat row(1, static_cast<int>(fv.values.size()));
    row.row(0) = Eigen::Map<const Vec>(fv.values.data(), fv.values.size()).transpose();
    write_fmx((fs::path(out_dir) / (manifest.records[i].id + ".fmx")).string(), row,
              FeatureKind::kFisherVector);
  }
  Json meta;
  meta["format"] = "fv-meta-v1";
  meta["k"] = ubm.k();
  meta["d"] = ubm.d();
  meta["weight_block"] = !no_weight_block;
  meta["alpha"] = alpha;
  meta["ubm_hash"] = fnv1a_hex(gmm_to_json(ubm).dump());
  save_json((fs::path(out_dir) / "encode_meta.json").string(), meta);
  std::cout << "encoded " << features.size() << " utterances\n";
}

void cmd_train_xvec(const std::string& speakers_path, const Json& config,
                    std::uint64_t seed, const std::string& out_dir) {
  PipelineConfig pc = pipeline_config_from_json(config);
  if (!config.contains("branch")) pc.branch = "xvec";
  if (!config.contains("feature_kind")) pc.feature_kind = FeatureKind::kMfccHires;
  pc.seed = seed;
  const Manifest speakers = read_manifest(speakers_path);
  const SpeakerPool pool = build_speaker_pool(speakers, pc.feature_kind, pc.vad,
                                              pc.augmented_copies,
                                              mix_seed(seed, 0xa9ULL));
  const TdnnConfig tc = tdnn_config_from_pipeline(
      pc, pool.features.front().dim(), static_cast<int>(pool.speaker_names.size()));
  const TdnnTrainResult trained = train_tdnn(pool.features, pool.labels, tc);
  fs::create_directories(out_dir);
  save_json((fs::path(out_dir) / "tdnn.json").string(), tdnn_to_json(trained.params));
  std::cout << "trained on " << pool.features.size() << " segments over "
            << pool.speaker_names.size() << " speakers; final loss "
            << trained.loss_trace.back() << "\n";
}

void cmd_extract_xvec(const std::string& manifest_path, const std::string& model_path,
                      const std::string& kind_name, const std::string& layer,
                      bool no_vad, const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path);
  const TdnnParams params = tdnn_from_json(load_json(model_path));
  const FeatureKind kind = feature_kind_from_name(kind_name);
  const EmbeddingLayer el = embedding_layer_from_name(layer);
  fs::create_directories(out_dir);
  for (const auto& rec : manifest.records) {
    const FrameMatrix fm = features_for_record(rec, kind, !no_vad);
    const Vec e = extract_embedding(params, pad_by_repetition(fm), el);
    Mat row(1, static_cast<int>(e.size()));
    row.row(0) = e.transpose();
    write_fmx((fs::path(out_dir) / (rec.id + ".fmx")).string(), row,
              FeatureKind::kXvector);
  }
  std::cout << "extracted " << manifest.records.size() << " embeddings\n";
}

void cmd_cv_grid(const std::string& manifest_path, const std::string& encodings_dir,
                 int folds, const Json& config, std::uint64_t seed,
                 const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path, false);
  const Mat x = stack_encodings(manifest, encodings_dir);

  std::vector<int> cv_rows;
  for (int i = 0; i < static_cast<int>(manifest.records.size()); ++i) {
    const std::string& s = manifest.records[i].split;
    if (s == "train" || s == "devel") cv_rows.push_back(i);
  }
  require(!cv_rows.empty(), ErrorKind::kData, "no train or devel rows");
  Mat x_cv(static_cast<int>(cv_rows.size()), x.cols());
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < cv_rows.size(); ++i) {
    x_cv.row(static_cast<int>(i)) = x.row(cv_rows[i]);
    labels.push_back(manifest.records[cv_rows[i]].label);
  }
  std::vector<double> grid = default_c_grid();
  if (config.contains("c_grid")) grid = config.at("c_grid").get<std::vector<double>>();

  const GridSearchResult result =
      grid_search_c(x_cv, labels, folds, grid, mix_seed(seed, 0xc5ULL));
  fs::create_directories(out_dir);
  Json j = grid_to_json(result, folds);
  j["classes"] = result.classes;
  save_json((fs::path(out_dir) / "cv.json").string(), j);

  std::ofstream pred((fs::path(out_dir) / "cv_predictions.csv").string(),
                     std::ios::binary);
  pred << "id,fold,truth,predicted\n";
  for (std::size_t i = 0; i < cv_rows.size(); ++i) {
    pred << manifest.records[cv_rows[i]].id << ',' << result.fold_of[i] << ','
         << labels[i] << ',' << result.cv_predicted[i] << '\n';
  }
  std::cout << "best C " << result.best_c << " mean CV UAR " << result.best_mean_uar
            << "\n";
}

void cmd_train_final(const std::string& manifest_path, const std::string& encodings_dir,
                     double c, std::uint64_t seed, const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path, false);
  const Mat x = stack_encodings(manifest, encodings_dir);
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(manifest.records.size()); ++i) {
    const std::string& s = manifest.records[i].split;
    if (s == "train" || s == "devel") rows.push_back(i);
  }
  require(!rows.empty(), ErrorKind::kData, "no train or devel rows");
  Mat xt(static_cast<int>(rows.size()), x.cols());
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xt.row(static_cast<int>(i)) = x.row(rows[i]);
    labels.push_back(manifest.records[rows[i]].label);
  }
  const auto fit = train_classifier(xt, labels, c, mix_seed(seed, 0xf17aULL));
  fs::create_directories(out_dir);
  save_json((fs::path(out_dir) / "svm.json").string(), svm_to_json(fit.model));
  std::cout << "trained at C " << c << "; converged "
            << (fit.diagnostics.converged ? "yes" : "no") << " after "
            << fit.diagnostics.epochs << " epochs, duality gap "
            << fit.diagnostics.duality_gap << "\n";
}

void cmd_predict(const std::string& manifest_path, const std::string& encodings_dir,
                 const std::string& model_path, const std::string& split,
                 const std::string& system, const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path, false);
  const Mat x = stack_encodings(manifest, encodings_dir);
  const SvmModel model = svm_from_json(load_json(model_path));
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(manifest.records.size()); ++i) {
    if (split == "all" || manifest.records[i].split == split) rows.push_back(i);
  }
  require(!rows.empty(), ErrorKind::kData, "no rows in split '" + split + "'");
  Mat xs(static_cast<int>(rows.size()), x.cols());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xs.row(static_cast<int>(i)) = x.row(rows[i]);
    ids.push_back(manifest.records[rows[i]].id);
  }
  const PosteriorSet post = model.predict(xs, ids, system);
  fs::create_directories(out_dir);
  write_posteriors((fs::path(out_dir) / "posteriors.csv").string(), post);
  std::cout << "wrote posteriors for " << rows.size() << " utterances\n";
}

void cmd_fuse(const std::vector<std::string>& inputs, const std::string& out_dir) {
  std::vector<PosteriorSet> systems;
  for (const auto& p : inputs) {
    systems.push_back(read_posteriors(p, fs::path(p).stem().string()));
  }
  const PosteriorSet fused = late_fuse(systems);
  fs::create_directories(out_dir);
  write_posteriors((fs::path(out_dir) / "fused_posteriors.csv").string(), fused);
  std::cout << "fused " << systems.size() << " systems over " << fused.ids.size()
            << " utterances\n";
}

void cmd_score(const std::string& manifest_path, const std::string& posteriors_path,
               const std::string& split, const std::string& out_dir) {
  const Manifest manifest = read_manifest(manifest_path, false);
  const PosteriorSet post = read_posteriors(posteriors_path);
  std::map<std::string, std::string> label_of;
  std::vector<std::string> all_labels;
  for (const auto& rec : manifest.records) {
    if (split == "all" || rec.split == split) label_of[rec.id] = rec.label;
    all_labels.push_back(rec.label);
  }
  const std::vector<std::string> classes = sorted_classes(all_labels);
  std::vector<std::string> truth, predicted;
  for (int i = 0; i < static_cast<int>(post.ids.size()); ++i) {
    const auto it = label_of.find(post.ids[i]);
    require(it != label_of.end(), ErrorKind::kData,
            "id '" + post.ids[i] + "' not found in split '" + split + "'");
    truth.push_back(it->second);
    predicted.push_back(post.probs(i, 1) > 0.5 ? classes[1] : classes[0]);
  }
  const double score = uar(truth, predicted);
  std::printf("UAR %.6f over %zu utterances\n", score, truth.size());
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    Json j;
    j["format"] = "score-v1";
    j["split"] = split;
    j["num_utterances"] = truth.size();
    j["uar"] = score;
    save_json((fs::path(out_dir) / "score.json").string(), j);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-branch paralinguistic classification pipeline: Fisher-vector "
               "encodings and TDNN embeddings over a synthetic speech corpus"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = "out";
  app.add_option("--seed", seed, "base random seed");
  app.add_option("--config", config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  synth->fallthrough();
  synth->callback([&] {
    Json cfg = load_config_or_empty(config_path);
    CorpusSpec spec = corpus_spec_from_json(cfg);
    if (app.count("--seed") > 0 || !cfg.contains("seed")) spec.seed = seed;
    const CorpusOutput corpus = synth_corpus(out_dir, spec);
    std::cout << "wrote " << corpus.classes.records.size() << " utterances to "
              << out_dir << "\n";
  });

  // features
  auto* features = app.add_subcommand("features", "extract frame features to .fmx");
  features->fallthrough();
  std::string manifest_path, kind_name = "mfcc";
  bool no_vad = false;
  features->add_option("--manifest", manifest_path, "manifest CSV")->required();
  features->add_option("--kind", kind_name, "mfcc | mfcc_hires | plp");
  features->add_flag("--no-vad", no_vad, "keep all frames");
  features->callback([&] { cmd_features(manifest_path, kind_name, no_vad, out_dir); });

  // train-ubm
  auto* train_ubm = app.add_subcommand("train-ubm", "fit the background model");
  train_ubm->fallthrough();
  std::string features_dir;
  int components = 8;
  train_ubm->add_option("--manifest", manifest_path, "manifest CSV")->required();
  train_ubm->add_option("--features", features_dir, "frame feature directory")
      ->required();
  train_ubm->add_option("--components", components, "mixture components");
  train_ubm->callback(
      [&] { cmd_train_ubm(manifest_path, features_dir, components, seed, out_dir); });

  // encode-fv
  auto* encode = app.add_subcommand("encode-fv", "encode Fisher vectors");
  encode->fallthrough();
  std::string ubm_path;
  double alpha = 0.5;
  bool no_weight_block = false;
  encode->add_option("--manifest", manifest_path, "manifest CSV")->required();
  encode->add_option("--features", features_dir, "frame feature directory")->required();
  encode->add_option("--ubm", ubm_path, "ubm.json path")->required();
  encode->add_option("--alpha", alpha, "power-normalization exponent");
  encode->add_flag("--no-weight-block", no_weight_block, "drop the weight block");
  encode->callback([&] {
    cmd_encode_fv(manifest_path, features_dir, ubm_path, alpha, no_weight_block,
                  out_dir);
  });

  // train-xvec
  auto* train_xvec = app.add_subcommand("train-xvec", "train the embedding network");
  train_xvec->fallthrough();
  std::string speakers_path;
  train_xvec->add_option("--manifest", speakers_path, "speaker manifest CSV")
      ->required();
  train_xvec->callback([&] {
    cmd_train_xvec(speakers_path, load_config_or_empty(config_path), seed, out_dir);
  });

  // extract-xvec
  auto* extract = app.add_subcommand("extract-xvec", "extract embeddings");
  extract->fallthrough();
  std::string model_path, layer = "segment6", xvec_kind = "mfcc_hires";
  bool xvec_no_vad = false;
  extract->add_option("--manifest", manifest_path, "manifest CSV")->required();
  extract->add_option("--model", model_path, "tdnn.json path")->required();
  extract->add_option("--kind", xvec_kind, "frame feature kind");
  extract->add_option("--layer", layer, "segment6 | segment7");
  extract->add_flag("--no-vad", xvec_no_vad, "keep all frames");
  extract->callback([&] {
    cmd_extract_xvec(manifest_path, model_path, xvec_kind, layer, xvec_no_vad, out_dir);
  });

  // cv-grid
  auto* cv_grid = app.add_subcommand("cv-grid", "cross-validated cost search");
  cv_grid->fallthrough();
  std::string encodings_dir;
  int folds = 10;
  cv_grid->add_option("--manifest", manifest_path, "manifest CSV")->required();
  cv_grid->add_option("--encodings", encodings_dir, "encoding directory")->required();
  cv_grid->add_option("--folds", folds, "number of folds");
  cv_grid->callback([&] {
    cmd_cv_grid(manifest_path, encodings_dir, folds, load_config_or_empty(config_path),
                seed, out_dir);
  });

  // train-final
  auto* train_final = app.add_subcommand("train-final", "train on train+devel");
  train_final->fallthrough();
  double c_value = 1.0;
  train_final->add_option("--manifest", manifest_path, "manifest CSV")->required();
  train_final->add_option("--encodings", encodings_dir, "encoding directory")
      ->required();
  train_final->add_option("--c", c_value, "cost value")->required();
  train_final->callback(
      [&] { cmd_train_final(manifest_path, encodings_dir, c_value, seed, out_dir); });

  // predict
  auto* predict = app.add_subcommand("predict", "write class posteriors");
  predict->fallthrough();
  std::string split = "test", system_tag = "system";
  predict->add_option("--manifest", manifest_path, "manifest CSV")->required();
  predict->add_option("--encodings", encodings_dir, "encoding directory")->required();
  predict->add_option("--model", model_path, "svm.json path")->required();
  predict->add_option("--split", split, "train | devel | test | all");
  predict->add_option("--system", system_tag, "system tag");
  predict->callback([&] {
    cmd_predict(manifest_path, encodings_dir, model_path, split, system_tag, out_dir);
  });

  // fuse
  auto* fuse = app.add_subcommand("fuse", "average posteriors of several systems");
  fuse->fallthrough();
  std::vector<std::string> fuse_inputs;
  fuse->add_option("--inputs", fuse_inputs, "posterior CSV paths")
      ->required()
      ->expected(2, -1);
  fuse->callback([&] { cmd_fuse(fuse_inputs, out_dir); });

  // score
  auto* score = app.add_subcommand("score", "UAR of a posterior file");
  score->fallthrough();
  std::string score_split = "test", posteriors_path;
  score->add_option("--manifest", manifest_path, "manifest CSV")->required();
  score->add_option("--posteriors", posteriors_path, "posterior CSV")->required();
  score->add_option("--split", score_split, "split to score against");
  score->callback([&] {
    cmd_score(manifest_path, posteriors_path, score_split,
              app.count("--out") > 0 ? out_dir : "");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
