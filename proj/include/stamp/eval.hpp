// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "stamp/data.hpp"
#include "stamp/model.hpp"
#include "stamp/sqlast.hpp"

namespace stamp {

// All fractions are in [0, 1]. Buckets are keyed by the gold condition count
// (0, 1, 2, 3-or-more) so bucket totals sum to the example total.
struct EvalReport {
  int total = 0;
  double acc_lf = 0.0;
  double acc_ex = 0.0;
  double acc_sel = 0.0;
  double acc_agg = 0.0;
  double acc_where = 0.0;
  double pct_executable = 0.0;
  std::array<int, 4> bucket_total{};
  std::array<int, 4> bucket_correct{};

  // Execution accuracy within a bucket; -1 when the bucket is empty.
  double bucket_acc(int b) const;
};

// Fractions among execution-incorrect predictions. Categories overlap, and
// predictions that do not even parse are counted in `wrong` only.
struct ErrorBreakdown {
  int wrong = 0;
  int wrong_sel = 0;
  int wrong_cond_count = 0;
  int wrong_where_cols = 0;
};

// Scores predictions against gold queries. A prediction that fails to parse
// scores zero on every per-example metric; one that parses but fails to
// validate still earns component credit (sel/agg/where) yet cannot count as
// executable or execution-correct. Acc_lf compares canonical serializations;
// Acc_ex compares execution results; Acc_where compares condition multisets
// order-insensitively with case-insensitive values. Throws DataError on
// length mismatch or a missing table.
EvalReport evaluate(const std::vector<TokenSeq>& preds,
                    const std::vector<Example>& golds,
                    const std::map<std::string, Table>& tables);

ErrorBreakdown error_breakdown(const std::vector<TokenSeq>& preds,
                               const std::vector<Example>& golds,
                               const std::map<std::string, Table>& tables);

// Greedy decodes every example with a shared scratch tape.
std::vector<TokenSeq> predict_all(Tape& tape, ModelParams& p,
                                  const std::vector<Example>& examples,
                                  const std::map<std::string, Table>& tables);

std::string report_to_json(const EvalReport& r);
std::string report_to_text(const EvalReport& r);

}  // namespace stamp
