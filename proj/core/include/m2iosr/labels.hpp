#pragma once

namespace m2iosr {

/// Label value for samples outside every known class.
inline constexpr int kUnknownLabel = -1;

/// A thresholded open-set decision for one sample.
struct OpenSetPrediction {
    int label = kUnknownLabel; // 0..K-1 or kUnknownLabel
    double confidence = 0.0;   // max softmax probability
};

} // namespace m2iosr
