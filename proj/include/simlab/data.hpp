#pragma once

// Training-data files. Unsupervised: one sentence per line. Supervised: TSV
// with anchor, positive and an optional hard-negative column.

#include <fstream>
#include <string>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/loss.hpp"

namespace simlab {

inline std::vector<TrainExample> load_train_file(const std::string& path, LossVariant variant) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open training file: " + path);
    std::vector<TrainExample> out;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (variant == LossVariant::Unsupervised) {
            out.push_back({line, std::nullopt, std::nullopt});
            continue;
        }
        std::size_t t1 = line.find('\t');
        if (t1 == std::string::npos)
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": supervised data needs anchor<TAB>positive[<TAB>negative]");
        std::size_t t2 = line.find('\t', t1 + 1);
        TrainExample ex;
        ex.anchor = line.substr(0, t1);
        if (t2 == std::string::npos) {
            ex.positive = line.substr(t1 + 1);
        } else {
            ex.positive = line.substr(t1 + 1, t2 - t1 - 1);
            ex.hard_negative = line.substr(t2 + 1);
        }
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw DataError(path + ": no training examples found");
    return out;
}

// Every sentence mentioned by the examples, for vocabulary building.
inline std::vector<std::string> corpus_of(const std::vector<TrainExample>& examples) {
    std::vector<std::string> out;
    for (const TrainExample& ex : examples) {
        out.push_back(ex.anchor);
        if (ex.positive) out.push_back(*ex.positive);
        if (ex.hard_negative) out.push_back(*ex.hard_negative);
    }
    return out;
}

}  // namespace simlab
