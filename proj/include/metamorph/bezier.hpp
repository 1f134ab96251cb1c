#pragma once

#include <vector>

#include "metamorph/geodesic.hpp"
#include "metamorph/image.hpp"

namespace metamorph {

/// Evaluation request for a discrete Bezier curve of degree n, given by n+1
/// control images. The curve lives on the same K-point time grid as the
/// underlying geodesics.
struct BezierJob {
    std::vector<ImageGrid> controls;
    int num_segments = 1;  ///< K
    double delta = 1.0;
    double gamma = 1.0;
    std::vector<int> eval_indices;  ///< which k to evaluate; empty means all of 0..K
    GeodesicSettings settings;

    int degree() const { return static_cast<int>(controls.size()) - 1; }
};

struct BezierEvaluation {
    int k = 0;
    ImageGrid image;
};

struct BezierCurveResult {
    std::vector<BezierEvaluation> evaluations;  ///< in eval_indices order
    /// The n geodesics between consecutive controls, solved once and shared
    /// by every evaluation index (their endpoints do not depend on k).
    /// Empty when no requested index needed them.
    std::vector<GeodesicResult> level1;
    int higher_level_solves = 0;  ///< geodesic solves at recursion levels >= 2
};

/// One point of the discrete Bezier curve via the hierarchical de Casteljau
/// recursion: for j=1..n, i=j..n, u_i^j is image k of the K-segment geodesic
/// between u_{i-1}^{j-1} and u_i^{j-1}; returns u_n^n. k=0 and k=K return the
/// first and last control bit-exactly without solving anything.
ImageGrid de_casteljau_evaluate(const BezierJob& job, int k);

/// Evaluates the curve at every requested index, solving the n level-1
/// geodesics once and the higher recursion levels per interior k.
BezierCurveResult bezier_curve(const BezierJob& job);

} // namespace metamorph
