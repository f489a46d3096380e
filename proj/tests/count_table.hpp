#pragma once

#include <array>

namespace gp::testing {

struct CountCase {
    int pred;
    int gt;
    bool correct;
    bool close;
    bool overcount;
};

// Hand-computed: close iff |pred - gt| <= 1 + floor(0.05 gt); overcount iff pred > 10 and pred >= 2 gt.
inline constexpr std::array<CountCase, 20> kCountTable{{
    {0, 0, true, true, false},
    {1, 0, false, true, false},
    {2, 0, false, false, false},
    {10, 0, false, false, false},
    {11, 0, false, false, true},
    {11, 10, false, true, false},
    {12, 10, false, false, false},
    {9, 10, false, true, false},
    {43, 40, false, true, false},
    {44, 40, false, false, false},
    {37, 40, false, true, false},
    {11, 4, false, false, true},
    {11, 6, false, false, false},
    {12, 6, false, false, true},
    {20, 20, true, true, false},
    {22, 20, false, true, false},
    {23, 20, false, false, false},
    {0, 5, false, false, false},
    {100, 50, false, false, true},
    {41, 39, false, true, false},
}};

} // namespace gp::testing
