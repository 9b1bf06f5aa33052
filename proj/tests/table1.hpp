#pragma once

// Published rows of the ablation table: model, PSNR(Y) dB, runtime ms, score.
// The bicubic row supplies P_bic for every other row.

#include <array>

namespace table1 {

struct Row {
    const char* name;
    double psnr;
    double runtime_ms;
    double score;
};

inline constexpr double kBicubicPsnr = 29.334;

inline constexpr std::array<Row, 34> kRows{{
    {"Q", 30.157, 3.19, 19.86},      {"X", 30.219, 3.59, 19.55},     {"Y", 30.172, 3.33, 19.64},
    {"Z", 30.269, 3.72, 19.88},      {"W", 30.326, 4.14, 19.60},     {"T", 30.271, 3.57, 20.32},
    {"A", 30.282, 3.58, 20.43},      {"E", 30.254, 2.89, 22.32},     {"1", 30.410, 4.95, 19.00},
    {"2", 30.433, 4.84, 19.53},      {"3", 30.424, 4.15, 20.96},     {"4", 30.390, 4.30, 20.11},
    {"P", 30.293, 6.50, 15.29},      {"P*", 29.712, 3.58, 13.77},    {"R", 30.286, 6.16, 15.63},
    {"R*", 30.113, 3.58, 18.44},     {"B", 30.324, 6.60, 15.50},     {"B*", 30.155, 3.58, 18.72},
    {"C", 30.320, 3.58, 20.99},      {"Bic++", 30.295, 2.89, 22.96}, {"F", 30.301, 3.58, 20.72},
    {"G", 30.281, 2.89, 22.74},      {"H", 30.277, 2.89, 22.68},     {"I", 30.283, 2.89, 22.77},
    {"J", 30.290, 2.89, 22.88},      {"5", 30.210, 3.58, 19.45},     {"6", 30.281, 3.58, 20.43},
    {"Bicubic", 29.334, 1.0, 0.0},   {"ESPCN", 30.419, 9.68, 13.67}, {"XCAT", 30.435, 11.68, 12.58},
    {"ABPN", 30.703, 15.76, 13.05},  {"XLSR", 30.637, 25.25, 9.84},  {"FSRCNN", 30.547, 33.75, 8.00},
    {"RFDN", 30.921, 159.3, 4.77},
}};

}  // namespace table1
