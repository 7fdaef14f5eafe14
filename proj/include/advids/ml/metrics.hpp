#pragma once

#include "advids/error.hpp"
#include "advids/ml/classifier.hpp"

#include <span>
#include <vector>

namespace advids::ml {

struct EvalReport {
    std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
    std::vector<double> precision;
    std::vector<double> recall; // per-class detection rate
    std::vector<double> f1;
    std::vector<bool> precision_undefined; // class never predicted
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f1 = 0;
    double accuracy = 0;

    std::size_t support(int c) const {
        std::size_t s = 0;
        for (auto v : confusion[static_cast<std::size_t>(c)]) s += v;
        return s;
    }
};

inline EvalReport report_from_predictions(std::span<const int> truth, std::span<const int> pred, int n_classes) {
    if (truth.size() != pred.size()) throw Error(ErrorKind::DimensionMismatch, "truth/prediction length");
    const auto k = static_cast<std::size_t>(n_classes);
    EvalReport r;
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
        correct += truth[i] == pred[i];
    }
    r.precision.assign(k, 0);
    r.recall.assign(k, 0);
    r.f1.assign(k, 0);
    r.precision_undefined.assign(k, false);
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t tp = r.confusion[c][c], row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += r.confusion[c][j];
            col += r.confusion[j][c];
        }
        if (col == 0) r.precision_undefined[c] = true;
        else r.precision[c] = static_cast<double>(tp) / static_cast<double>(col);
        if (row > 0) r.recall[c] = static_cast<double>(tp) / static_cast<double>(row);
        const double s = r.precision[c] + r.recall[c];
        r.f1[c] = s > 0 ? 2 * r.precision[c] * r.recall[c] / s : 0;
        if (row > 0) {
            ++present;
            r.macro_precision += r.precision[c];
            r.macro_recall += r.recall[c];
            r.macro_f1 += r.f1[c];
        }
    }
    if (present > 0) {
        r.macro_precision /= static_cast<double>(present);
        r.macro_recall /= static_cast<double>(present);
        r.macro_f1 /= static_cast<double>(present);
    }
    r.accuracy = truth.empty() ? 0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    return r;
}

// Macro averages run over classes with non-zero support.
inline EvalReport evaluate(const Classifier& model, std::span<const EncodedInstance> data) {
    if (data.empty()) throw Error(ErrorKind::EmptyDataset, "evaluate needs data");
    std::vector<int> truth, pred;
    truth.reserve(data.size());
    pred.reserve(data.size());
    for (const auto& e : data) {
        truth.push_back(e.label);
        pred.push_back(model.predict(e.x));
    }
    return report_from_predictions(truth, pred, model.n_classes());
}

} // namespace advids::ml
