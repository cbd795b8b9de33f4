// Copyright 2026 The mbdlab Authors.
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

#ifndef MBDLAB_CLI_PIPELINE_H_
#define MBDLAB_CLI_PIPELINE_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbdlab/cli/config.h"
#include "mbdlab/mbd/branch.h"
#include "mbdlab/signals/signals.h"

namespace mbdlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitNumerical = 4;

enum class Stage { kGenData, kTrainRanker, kTrainMbd, kRerank, kReport, kAll };

std::string to_string(Stage stage);
// Throws ConfigError("stage", ...) for an unknown name.
Stage stage_from_string(const std::string& name);

// An input file a stage needs is absent; `stage` names the one that makes it.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::string& path, const std::string& stage)
      : std::runtime_error("missing '" + path + "'; run stage '" + stage + "' first"),
        stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// File names inside the output directory.
namespace artifacts {
inline constexpr const char* kDataset = "dataset.csv";
inline constexpr const char* kRanker = "ranker.ckpt";
inline constexpr const char* kCandidates = "candidates.csv";
inline constexpr const char* kReranked = "reranked.csv";
inline constexpr const char* kTable1 = "table1_signal_quality.csv";
inline constexpr const char* kTable2 = "table2_debias_correlation.csv";
inline constexpr const char* kTable3 = "table3_efficiency.csv";
inline constexpr const char* kBucketFit = "fig_bucket_fit.csv";
inline constexpr const char* kStaleness = "fig_staleness.csv";
inline constexpr const char* kSummary = "summary.json";
std::string branch_checkpoint(const std::string& branch);
}  // namespace artifacts

// ---------------------------------------------------------------------------
// Candidates and reranking.

// Header: request_id,candidate_id,pred_<task>...,x_<column>...
// Predictions are in natural units: log1p watch time for regression tasks,
// probabilities for binary ones. x_ columns are raw x' values.
struct Candidate {
  std::uint64_t request_id = 0;
  std::uint64_t candidate_id = 0;
  std::vector<double> predictions;
  std::vector<double> xprime;
};

struct CandidateFile {
  std::vector<std::string> tasks;
  std::vector<std::string> columns;
  std::vector<Candidate> rows;
  std::size_t malformed = 0;  // rows skipped while reading
};

void write_candidates(std::ostream& out, const CandidateFile& file,
                      const std::vector<std::string>& comments = {});
// Skips and counts rows with the wrong cell count or a non-finite or
// unparsable cell. Throws std::runtime_error for a bad header.
CandidateFile read_candidates(std::istream& in);

struct RerankRow {
  std::uint64_t request_id = 0;
  std::size_t rank = 0;  // 1-based within the request
  std::uint64_t candidate_id = 0;
  double s_final = 0.0;
  double rps = 0.0;
  double adjusted = 0.0;
  bool fell_back = false;
};

struct RerankResult {
  std::vector<RerankRow> rows;  // requests ascending, then rank
  std::size_t skipped = 0;      // candidates the policy could not score
};

// S_final from `weights` (by task name), RPS from `branch` on the candidate's
// x', adjusted by the policy. Within a request: stable sort on the adjusted
// score descending, ties by candidate id ascending. Throws
// std::invalid_argument if the file lacks a weighted task or the branch's
// columns.
RerankResult rerank(const CandidateFile& candidates, const std::map<std::string, double>& weights,
                    const signals::VmPolicy& policy, const mbd::MbdBranch& branch);

void write_reranked(std::ostream& out, const RerankResult& result,
                    const std::vector<std::string>& comments = {});

// A ranker prediction in natural units mapped into the branch's space.
double to_branch_space(const mbd::MbdBranch& branch, double prediction);

// ---------------------------------------------------------------------------

struct RunOptions {
  std::string out_dir;          // overrides config.output_dir when nonempty
  std::string candidates_path;  // rerank input; default: built from held-out rows
  std::ostream* log = nullptr;  // progress lines
};

// Runs one stage (or all, in order). Throws ConfigError, MissingArtifact,
// NumericalError or other exceptions; see run_cli for the exit mapping.
void run_stage(Stage stage, const ExperimentConfig& config, const RunOptions& options);

// Loads the config, runs the stage, and maps failures to exit codes with a
// one-line diagnostic on `err`.
int run_cli(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& stage, const RunOptions& options, std::ostream& err);

}  // namespace mbdlab::cli

#endif  // MBDLAB_CLI_PIPELINE_H_
