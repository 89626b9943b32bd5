#pragma once

// Embedded explicit Runge-Kutta tableaus.

#include <vector>

namespace snde {

/// Coefficients of an embedded explicit Runge-Kutta pair.
struct ButcherTableau {
    int stages = 0;
    std::vector<double> c;        ///< stage nodes
    std::vector<double> a;        ///< strictly lower-triangular coupling, row-major stages x stages
    std::vector<double> b;        ///< weights of the order-p solution
    std::vector<double> b_hat;    ///< weights of the embedded order-p_hat solution
    int order = 0;                ///< p
    int embedded_order = 0;       ///< p_hat, < p

    double a_at(int i, int j) const { return a[i * stages + j]; }
};

/// Tsitouras 5(4) pair. Free 7th stage evaluated at (t+h, u_high); the
/// embedded weights come from the published b - b_hat differences.
inline const ButcherTableau& tsit5() {
    static const ButcherTableau tab = [] {
        ButcherTableau t;
        t.stages = 7;
        t.order = 5;
        t.embedded_order = 4;
        t.c = {0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0};
        t.a.assign(49, 0.0);
        auto A = [&](int i, int j, double v) { t.a[i * 7 + j] = v; };
        A(1, 0, 0.161);
        A(2, 0, -0.008480655492356989);
        A(2, 1, 0.335480655492357);
        A(3, 0, 2.8971530571054935);
        A(3, 1, -6.359448489975075);
        A(3, 2, 4.3622954328695815);
        A(4, 0, 5.325864828439257);
        A(4, 1, -11.748883564062828);
        A(4, 2, 7.4955393428898365);
        A(4, 3, -0.09249506636175525);
        A(5, 0, 5.86145544294642);
        A(5, 1, -12.92096931784711);
        A(5, 2, 8.159367898576159);
        A(5, 3, -0.071584973281401);
        A(5, 4, -0.028269050394068383);
        t.b = {0.09646076681806523, 0.01,       0.4798896504144996,
               1.379008574103742,   -3.290069515436081,
               2.324710524099774,   0.0};
        for (int j = 0; j < 7; ++j) A(6, j, t.b[j]);
        const double btilde[7] = {-0.00178001105222577714, -0.0008164344596567469,
                                  0.007880878010261995,    -0.1447110071732629,
                                  0.5823571654525552,      -0.45808210592918697,
                                  0.015151515151515152};
        t.b_hat.resize(7);
        for (int j = 0; j < 7; ++j) t.b_hat[j] = t.b[j] - btilde[j];
        return t;
    }();
    return tab;
}

}  // namespace snde
