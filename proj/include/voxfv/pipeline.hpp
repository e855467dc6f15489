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

#ifndef VOXFV_PIPELINE_HPP_
#define VOXFV_PIPELINE_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "voxfv/augment.hpp"
#include "voxfv/common.hpp"
#include "voxfv/eval.hpp"
#include "voxfv/fisher.hpp"
#include "voxfv/frontend.hpp"
#include "voxfv/gmm.hpp"
#include "voxfv/io.hpp"
#include "voxfv/svm.hpp"
#include "voxfv/tdnn.hpp"

namespace voxfv {

struct PipelineConfig {
  std::string branch = "fv";  // fv | xvec
  FeatureKind feature_kind = FeatureKind::kMfcc;
  bool vad = true;
  int folds = 10;
  std::vector<double> c_grid = default_c_grid();
  std::uint64_t seed = 0;

  // Fisher-vector branch
  int ubm_components = 8;
  double fv_alpha = 0.5;
  bool fv_weight_block = true;

  // x-vector branch
  int tdnn_frame_dim = 512;
  int tdnn_frame5_dim = 1500;
  int tdnn_segment_dim = 512;
  int tdnn_epochs = 10;
  int tdnn_minibatch = 16;
  int tdnn_segment_len = 150;
  double tdnn_learning_rate = 0.01;
  int augmented_copies = 3;  // per clean training utterance
  std::string embedding_layer = "segment6";

  void validate() const {
    require(branch == "fv" || branch == "xvec", ErrorKind::kConfig,
            "branch must be 'fv' or 'xvec'");
    require(folds >= 2, ErrorKind::kConfig, "folds must be >= 2");
    require(ubm_components >= 1, ErrorKind::kConfig, "ubm_components must be >= 1");
    require(fv_alpha > 0.0 && fv_alpha <= 1.0, ErrorKind::kConfig,
            "fv_alpha must lie in (0, 1]");
    require(augmented_copies >= 0, ErrorKind::kConfig, "augmented_copies must be >= 0");
    embedding_layer_from_name(embedding_layer);
  }
};

inline PipelineConfig pipeline_config_from_json(const Json& j) {
  PipelineConfig c;
  c.branch = j.value("branch", c.branch);
  if (j.contains("feature_kind")) {
    c.feature_kind = feature_kind_from_name(j.at("feature_kind").get<std::string>());
  } else if (c.branch == "xvec") {
    c.feature_kind = FeatureKind::kMfccHires;
  }
  c.vad = j.value("vad", c.vad);
  c.folds = j.value("folds", c.folds);
  if (j.contains("c_grid")) c.c_grid = j.at("c_grid").get<std::vector<double>>();
  c.seed = j.value("seed", c.seed);
  c.ubm_components = j.value("ubm_components", c.ubm_components);
  c.fv_alpha = j.value("fv_alpha", c.fv_alpha);
  c.fv_weight_block = j.value("fv_weight_block", c.fv_weight_block);
  c.tdnn_frame_dim = j.value("tdnn_frame_dim", c.tdnn_frame_dim);
  c.tdnn_frame5_dim = j.value("tdnn_frame5_dim", c.tdnn_frame5_dim);
  c.tdnn_segment_dim = j.value("tdnn_segment_dim", c.tdnn_segment_dim);
  c.tdnn_epochs = j.value("tdnn_epochs", c.tdnn_epochs);
  c.tdnn_minibatch = j.value("tdnn_minibatch", c.tdnn_minibatch);
  c.tdnn_segment_len = j.value("tdnn_segment_len", c.tdnn_segment_len);
  c.tdnn_learning_rate = j.value("tdnn_learning_rate", c.tdnn_learning_rate);
  c.augmented_copies = j.value("augmented_copies", c.augmented_copies);
  c.embedding_layer = j.value("embedding_layer", c.embedding_layer);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Feature stage
// ---------------------------------------------------------------------------

inline FrameMatrix features_for_record(const ManifestRecord& rec, FeatureKind kind,
                                       bool vad) {
  const AudioSignal signal = read_wav(rec.path);
  VadConfig vc;
  vc.enabled = vad;
  return extract_features(signal, config_for_kind(kind), vc, rec.id);
}

inline std::vector<FrameMatrix> features_for_manifest(const Manifest& manifest,
                                                      FeatureKind kind, bool vad) {
  std::vector<FrameMatrix> out;
  out.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    out.push_back(features_for_record(rec, kind, vad));
  }
  return out;
}

// Vertical concatenation of the frames of the selected splits.
inline Mat pool_split_frames(const std::vector<FrameMatrix>& features,
                             const Manifest& manifest,
                             const std::vector<std::string>& splits) {
  require(features.size() == manifest.records.size(), ErrorKind::kShape,
          "feature count does not match manifest");
  long rows = 0;
  const int d = features.empty() ? 0 : features.front().dim();
  std::vector<int> keep;
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (const auto& s : splits) {
      if (manifest.records[i].split == s) {
        keep.push_back(static_cast<int>(i));
        rows += features[i].num_frames();
        break;
      }
    }
  }
  require(rows > 0, ErrorKind::kData, "no frames in the requested splits");
  Mat pooled(rows, d);
  long at = 0;
  for (int i : keep) {
    pooled.middleRows(at, features[i].num_frames()) = features[i].data;
    at += features[i].num_frames();
  }
  return pooled;
}

// ---------------------------------------------------------------------------
// Fisher-vector branch stages
// ---------------------------------------------------------------------------

// One fully normalized encoding per utterance, stacked in manifest order.
inline Mat fv_matrix(const GmmModel& ubm, const std::vector<FrameMatrix>& features,
                     bool include_weight_block, double alpha) {
  require(!features.empty(), ErrorKind::kData, "no utterances to encode");
  FvLayout layout{static_cast<int>(ubm.k()), static_cast<int>(ubm.d()),
                  include_weight_block};
  Mat x(static_cast<int>(features.size()), layout.length());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FisherVector fv = encode_fv_normalized(ubm, features[i],
                                                 include_weight_block, alpha);
    x.row(static_cast<int>(i)) =
        Eigen::Map<const Vec>(fv.values.data(), fv.values.size()).transpose();
  }
  return x;
}

// ---------------------------------------------------------------------------
// x-vector branch stages
// ---------------------------------------------------------------------------

struct SpeakerPool {
  std::vector<FrameMatrix> features;
  std::vector<int> labels;
  std::vector<std::string> speaker_names;  // sorted; index is the class id
};

// Training pool for the embedding network: each train-split utterance
// contributes one clean copy plus augmented copies cycling through the
// four augmentation kinds with seeded noise levels.
inline SpeakerPool build_speaker_pool(const Manifest& speakers, FeatureKind kind,
                                      bool vad, int copies, std::uint64_t seed) {
  static const AugmentKind kCycle[4] = {AugmentKind::kBabble, AugmentKind::kMusic,
                                        AugmentKind::kNoise, AugmentKind::kReverb};
  const std::vector<ManifestRecord> train = speakers.split("train");
  require(!train.empty(), ErrorKind::kData, "speaker manifest has no train rows");

  SpeakerPool pool;
  for (const auto& rec : train) pool.speaker_names.push_back(rec.label);
  std::sort(pool.speaker_names.begin(), pool.speaker_names.end());
  pool.speaker_names.erase(
      std::unique(pool.speaker_names.begin(), pool.speaker_names.end()),
      pool.speaker_names.end());
  require(pool.speaker_names.size() >= 2, ErrorKind::kData,
          "need at least two training speakers");
  std::map<std::string, int> class_of;
  for (std::size_t i = 0; i < pool.speaker_names.size(); ++i) {
    class_of[pool.speaker_names[i]] = static_cast<int>(i);
  }

  const FrontendConfig fc = config_for_kind(kind);
  VadConfig vc;
  vc.enabled = vad;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const ManifestRecord& rec = train[i];
    const AudioSignal clean = read_wav(rec.path);
    pool.features.push_back(extract_features(clean, fc, vc, rec.id));
    pool.labels.push_back(class_of.at(rec.label));
    for (int j = 0; j < copies; ++j) {
      const AugmentKind akind = kCycle[(i + j) % 4];
      Rng prng(mix_seed(seed, 0xa7a7ULL, i * 16 + static_cast<std::uint64_t>(j)));
      AugmentParams params;
      params.snr_db = prng.uniform(5.0, 20.0);
      params.decay_time_s = prng.uniform(0.2, 0.4);
      const AudioSignal noisy = augment(clean, akind, params,
                                        mix_seed(seed, i, static_cast<std::uint64_t>(j)));
      const std::string aug_id =
          rec.id + "#" + augment_kind_name(akind) + std::to_string(j);
      pool.features.push_back(extract_features(noisy, fc, vc, aug_id));
      pool.labels.push_back(class_of.at(rec.label));
    }
  }
  return pool;
}

inline TdnnConfig tdnn_config_from_pipeline(const PipelineConfig& c, int input_dim,
                                            int num_classes) {
  TdnnConfig tc;
  tc.input_dim = input_dim;
  tc.frame_dim = c.tdnn_frame_dim;
  tc.frame5_dim = c.tdnn_frame5_dim;
  tc.segment_dim = c.tdnn_segment_dim;
  tc.num_classes = num_classes;
  tc.seed = mix_seed(c.seed, 0x7464ULL);
  tc.train.epochs = c.tdnn_epochs;
  tc.train.minibatch = c.tdnn_minibatch;
  tc.train.segment_len = c.tdnn_segment_len;
  tc.train.learning_rate = c.tdnn_learning_rate;
  return tc;
}

// One embedding per utterance, stacked in manifest order; short utterances
// are padded by cyclic repetition before extraction.
inline Mat embedding_matrix(const TdnnParams& params,
                            const std::vector<FrameMatrix>& features,
                            EmbeddingLayer layer) {
  require(!features.empty(), ErrorKind::kData, "no utterances to embed");
  Mat x(static_cast<int>(features.size()), params.config.segment_dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Vec e = extract_embedding(params, pad_by_repetition(features[i]), layer);
    x.row(static_cast<int>(i)) = e.transpose();
  }
  return x;
}

// ---------------------------------------------------------------------------
// Shared classification protocol
// ---------------------------------------------------------------------------

struct ProtocolResult {
  GridSearchResult grid;
  SvmModel final_model;         // trained on train+devel at the chosen cost
  PosteriorSet test_posteriors;
  double dev_uar = 0.0;   // train on train, score on devel
  double test_uar = 0.0;  // train on train+devel, score on test
  std::vector<int> cv_rows;  // manifest row index per CV-pool row
};

// The evaluation protocol both branches share: cost search by stratified
// cross validation on the pooled train+devel rows, a final model on that
// pool scored on test, and a devel score from a train-only model.
inline ProtocolResult run_protocol(const Mat& x, const Manifest& manifest,
                                   const PipelineConfig& config,
                                   const std::string& system_tag) {
  const int n = static_cast<int>(manifest.records.size());
  require(x.rows() == n, ErrorKind::kShape, "row count does not match manifest");
  std::vector<int> cv_rows, train_rows, devel_rows, test_rows;
  for (int i = 0; i < n; ++i) {
    const std::string& s = manifest.records[i].split;
    if (s == "train") {
      train_rows.push_back(i);
      cv_rows.push_back(i);
    } else if (s == "devel") {
      devel_rows.push_back(i);
      cv_rows.push_back(i);
    } else {
      test_rows.push_back(i);
    }
  }
  require(!train_rows.empty() && !devel_rows.empty() && !test_rows.empty(),
          ErrorKind::kData, "manifest must populate train, devel and test");

  auto submatrix = [&](const std::vector<int>& rows) {
    Mat m(static_cast<int>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      m.row(static_cast<int>(i)) = x.row(rows[i]);
    }
    return m;
  };
  auto sublabels = [&](const std::vector<int>& rows) {
    std::vector<std::string> l;
    for (int i : rows) l.push_back(manifest.records[i].label);
    return l;
  };
  auto subids = [&](const std::vector<int>& rows) {
    std::vector<std::string> ids;
    for (int i : rows) ids.push_back(manifest.records[i].id);
    return ids;
  };

  ProtocolResult r;
  r.cv_rows = cv_rows;
  const Mat x_cv = submatrix(cv_rows);
  const std::vector<std::string> labels_cv = sublabels(cv_rows);
  r.grid = grid_search_c(x_cv, labels_cv, config.folds, config.c_grid,
                         mix_seed(config.seed, 0xc5ULL));

  const auto final_fit = train_classifier(x_cv, labels_cv, r.grid.best_c,
                                          mix_seed(config.seed, 0xf17aULL));
  r.final_model = final_fit.model;
  r.test_posteriors =
      r.final_model.predict(submatrix(test_rows), subids(test_rows), system_tag);
  r.test_uar = uar(sublabels(test_rows),
                   posterior_labels(r.test_posteriors, r.final_model.classes));

  const auto dev_fit = train_classifier(submatrix(train_rows), sublabels(train_rows),
                                        r.grid.best_c, mix_seed(config.seed, 0xdeULL));
  const PosteriorSet dev_post =
      dev_fit.model.predict(submatrix(devel_rows), subids(devel_rows), system_tag);
  r.dev_uar =
      uar(sublabels(devel_rows), posterior_labels(dev_post, dev_fit.model.classes));
  return r;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline void write_cv_predictions(const std::string& path, const Manifest& manifest,
                                 const ProtocolResult& r) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kFormat, "cannot open '" + path + "' for writing");
  out << "id,fold,truth,predicted\n";
  for (std::size_t i = 0; i < r.cv_rows.size(); ++i) {
    const ManifestRecord& rec = manifest.records[r.cv_rows[i]];
    out << rec.id << ',' << r.grid.fold_of[i] << ',' << rec.label << ','
        << r.grid.cv_predicted[i] << '\n';
  }
  require(out.good(), ErrorKind::kInternal, "failed writing '" + path + "'");
}

// Recomputes the mean-over-folds recall average from a cv_predictions file;
// the report's CV score must reproduce exactly.
inline double cv_uar_from_predictions(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kFormat, "cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "id,fold,truth,predicted",
          ErrorKind::kFormat, "unexpected cv_predictions header");
  std::map<int, std::vector<std::string>> truth, pred;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma
                                                                     : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(fields.size() == 4, ErrorKind::kFormat, "bad cv_predictions row");
    const int fold = std::stoi(fields[1]);
    truth[fold].push_back(fields[2]);
    pred[fold].push_back(fields[3]);
  }
  require(!truth.empty(), ErrorKind::kData, "cv_predictions file has no rows");
  double sum = 0.0;
  for (const auto& [fold, t] : truth) sum += uar(t, pred.at(fold));
  return sum / static_cast<double>(truth.size());
}

inline Json grid_to_json(const GridSearchResult& grid, int folds) {
  Json cv;
  cv["folds"] = folds;
  cv["grid"] = Json::array();
  for (const auto& p : grid.points) {
    cv["grid"].push_back(
        {{"c", p.c}, {"mean_uar", p.mean_uar}, {"fold_uars", p.fold_uars}});
  }
  cv["best_c"] = grid.best_c;
  cv["best_mean_uar"] = grid.best_mean_uar;
  return cv;
}

// ---------------------------------------------------------------------------
// End-to-end branch runs
// ---------------------------------------------------------------------------

struct BranchRun {
  Json report;
  std::string system;
  PosteriorSet test_posteriors;
  double test_uar = 0.0;
};

// Executes one branch end to end and writes report.json, posterior and CV
// prediction CSVs, and the stage models under out_dir.
inline BranchRun run_pipeline(const std::string& manifest_path,
                              const PipelineConfig& config,
                              const std::string& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const Manifest manifest = read_manifest(manifest_path);
  const std::vector<FrameMatrix> features =
      features_for_manifest(manifest, config.feature_kind, config.vad);

  BranchRun run;
  Json model_artifacts;
  Mat x;
  if (config.branch == "fv") {
    const Mat pooled = pool_split_frames(features, manifest, {"train", "devel"});
    EmOptions em;
    em.seed = mix_seed(config.seed, 0x9bULL);
    const EmResult ubm = em_fit(pooled, config.ubm_components, em);
    save_json((fs::path(out_dir) / "ubm.json").string(), gmm_to_json(ubm.model));
    model_artifacts["ubm"] = "ubm.json";
    x = fv_matrix(ubm.model, features, config.fv_weight_block, config.fv_alpha);
    run.system = "fv-" + std::string(feature_kind_name(config.feature_kind)) + "-k" +
                 std::to_string(config.ubm_components);
  } else {
    const fs::path speakers_path = fs::path(manifest_path).parent_path() / "speakers.csv";
    const Manifest speakers = read_manifest(speakers_path.string());
    const SpeakerPool pool = build_speaker_pool(speakers, config.feature_kind,
                                                config.vad, config.augmented_copies,
                                                mix_seed(config.seed, 0xa9ULL));
    const TdnnConfig tc = tdnn_config_from_pipeline(
        config, static_cast<int>(features.front().dim()),
        static_cast<int>(pool.speaker_names.size()));
    const TdnnTrainResult trained = train_tdnn(pool.features, pool.labels, tc);
    save_json((fs::path(out_dir) / "tdnn.json").string(), tdnn_to_json(trained.params));
    model_artifacts["tdnn"] = "tdnn.json";
    x = embedding_matrix(trained.params, features,
                         embedding_layer_from_name(config.embedding_layer));
    run.system = "xvec-" + std::string(feature_kind_name(config.feature_kind)) + "-" +
                 config.embedding_layer;
  }

  const ProtocolResult protocol = run_protocol(x, manifest, config, run.system);
  run.test_posteriors = protocol.test_posteriors;
  run.test_uar = protocol.test_uar;

  write_posteriors((fs::path(out_dir) / "test_posteriors.csv").string(),
                   protocol.test_posteriors);
  write_cv_predictions((fs::path(out_dir) / "cv_predictions.csv").string(), manifest,
                       protocol);
  save_json((fs::path(out_dir) / "svm.json").string(),
            svm_to_json(protocol.final_model));

  Json counts;
  counts["train"] = manifest.split("train").size();
  counts["devel"] = manifest.split("devel").size();
  counts["test"] = manifest.split("test").size();

  Json report;
  report["format"] = "report-v1";
  report["system"] = run.system;
  report["branch"] = config.branch;
  report["seed"] = config.seed;
  report["feature_kind"] = feature_kind_name(config.feature_kind);
  report["classes"] = protocol.grid.classes;
  report["counts"] = counts;
  report["cv"] = grid_to_json(protocol.grid, config.folds);
  report["dev_uar"] = protocol.dev_uar;
  report["test_uar"] = protocol.test_uar;
  Json artifacts = model_artifacts;
  artifacts["svm"] = "svm.json";
  artifacts["posteriors"] = "test_posteriors.csv";
  artifacts["cv_predictions"] = "cv_predictions.csv";
  report["artifacts"] = artifacts;
  save_json((fs::path(out_dir) / "report.json").string(), report);
  run.report = report;
  return run;
}

// Arithmetic-mean fusion of branch posterior sets, scored against the
// manifest's test labels.
inline BranchRun run_fusion(const std::vector<PosteriorSet>& systems,
                            const std::string& manifest_path,
                            const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const Manifest manifest = read_manifest(manifest_path, false);
  std::map<std::string, std::string> label_of;
  for (const auto& rec : manifest.records) label_of[rec.id] = rec.label;

  BranchRun run;
  run.test_posteriors = late_fuse(systems);
  run.system = run.test_posteriors.system;

  std::vector<std::string> classes;
  for (const auto& rec : manifest.records) classes.push_back(rec.label);
  classes = sorted_classes(classes);

  std::vector<std::string> truth;
  for (const auto& id : run.test_posteriors.ids) {
    const auto it = label_of.find(id);
    require(it != label_of.end(), ErrorKind::kData,
            "fused id '" + id + "' not present in manifest");
    truth.push_back(it->second);
  }
  run.test_uar = uar(truth, posterior_labels(run.test_posteriors, classes));

  write_posteriors((fs::path(out_dir) / "fused_posteriors.csv").string(),
                   run.test_posteriors);
  Json systems_json = Json::array();
  for (const auto& s : systems) systems_json.push_back(s.system);
  Json report;
  report["format"] = "report-v1";
  report["system"] = run.system;
  report["branch"] = "fusion";
  report["systems"] = systems_json;
  report["classes"] = classes;
  report["test_uar"] = run.test_uar;
  report["artifacts"] = {{"posteriors", "fused_posteriors.csv"}};
  save_json((fs::path(out_dir) / "report.json").string(), report);
  run.report = report;
  return run;
}

}  // namespace voxfv

#endif  // VOXFV_PIPELINE_HPP_
