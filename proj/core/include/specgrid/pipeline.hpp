#ifndef SPECGRID_PIPELINE_HPP
#define SPECGRID_PIPELINE_HPP

#include <string>
#include <vector>

#include "specgrid/evalx.hpp"
#include "specgrid/hiergraph.hpp"
#include "specgrid/hrgat.hpp"
#include "specgrid/synth.hpp"

namespace specgrid {

/// Run configuration. Parsed from a key=value config file; CLI flags
/// override individual keys. Unknown keys are rejected.
struct RunConfig {
  std::string inputs_dir = ".";
  std::string out_dir = "out";
  double sigma = 0.0;  // meters; 0 = per-zoom default (tile width)
  std::vector<int> zooms = {13, 14, 15};
  HrGatConfig model;
  std::string cv_mode = "cbcv";  // cbcv | loco
  std::string test_city = "ottawa";
  std::size_t shap_samples = 16;
  std::size_t shap_permutations = 6;
  SyntheticSpec synth;
};

RunConfig load_config(const std::string& path);
/// Applies one "key=value" override; throws DataError on unknown keys.
void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value);
void validate_config(const RunConfig& config);
/// Canonical serialization (used for the manifest config hash).
std::string config_text(const RunConfig& config);

// --- pipeline stages (file in, file out; `all` chains them) -----------------

void stage_synth(const RunConfig& config);
void stage_proxy(const RunConfig& config);
void stage_ingest(const RunConfig& config);
void stage_graph(const RunConfig& config);
void stage_train(const RunConfig& config);
void stage_eval(const RunConfig& config);
void stage_explain(const RunConfig& config);
void stage_all(const RunConfig& config);

// --- shared plumbing ---------------------------------------------------------

/// Rebuilds the FeatureTable from the ingest stage's outputs.
FeatureTable load_feature_table(const RunConfig& config);

enum class ModelKind { hrgat, plain_gat, linear, mlp };
std::string model_name(ModelKind kind);

/// Cross-validated fit/predict closure for one model family. Feature (and
/// target) standardization is fitted per call on the supplied train rows.
FitPredictFn make_fitter(ModelKind kind, const FeatureTable& table,
                         const HierGraph& graph, const HrGatConfig& config);

/// Rows at `zoom` that have at least one of the given zoom-15 rows as a
/// descendant (used to fit coarse-zoom standardizers on train data only).
std::vector<std::size_t> ancestor_rows(const FeatureTable& table,
                                       const std::vector<std::size_t>& z15_rows,
                                       int zoom);

/// Per-zoom standardized feature matrices for the graph models.
std::map<int, DenseMatrix> standardized_inputs(
    const FeatureTable& table, const std::vector<std::size_t>& train_rows,
    const std::vector<int>& zooms);

}  // namespace specgrid

#endif  // SPECGRID_PIPELINE_HPP
