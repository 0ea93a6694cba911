#include "buckrl/svg.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "buckrl/artifacts.hpp"

namespace buckrl {

namespace {

struct Panel {
    double x0, y0, w, h;       // pixel box
    double tmin, tmax;         // data ranges
    double ymin, ymax;

    double px(double t) const { return x0 + (t - tmin) / (tmax - tmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void polyline(std::string& svg, const Panel& p,
              std::span<const StepRecord> rows, double StepRecord::* field,
              const char* color) {
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"", color);
    // thin dense traces: at most ~2000 points per line
    const std::size_t stride = std::max<std::size_t>(1, rows.size() / 2000);
    for (std::size_t i = 0; i < rows.size(); i += stride) {
        const auto& r = rows[i];
        svg += fmt::format("{:.1f},{:.1f} ", p.px(r.t), p.py(r.*field));
    }
    if (!rows.empty()) {
        const auto& r = rows.back();
        svg += fmt::format("{:.1f},{:.1f}", p.px(r.t), p.py(r.*field));
    }
    svg += "\"/>\n";
}

void axis_box(std::string& svg, const Panel& p, const std::string& ylabel) {
    svg += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        p.x0, p.y0, p.w, p.h);
    for (int k = 0; k <= 4; ++k) {
        const double yv = p.ymin + (p.ymax - p.ymin) * k / 4.0;
        const double yy = p.py(yv);
        svg += fmt::format(
            "<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n",
            p.x0, yy, p.x0 + p.w, yy);
        svg += fmt::format(
            "<text x=\"{}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"end\" fill=\"#333\">{:.4g}</text>\n",
            p.x0 - 4, yy + 3, yv);
    }
    for (int k = 0; k <= 6; ++k) {
        const double tv = p.tmin + (p.tmax - p.tmin) * k / 6.0;
        svg += fmt::format(
            "<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\" fill=\"#333\">{:.3g}</text>\n",
            p.px(tv), p.y0 + p.h + 12, tv);
    }
    svg += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#000\">{}</text>\n",
        p.x0, p.y0 - 5, ylabel);
}

}  // namespace

std::string render_scenario_svg(const ScenarioResult& result, double v_ref) {
    const auto& rows = result.trace;
    const double tmax = rows.empty() ? 1.0 : rows.back().t;

    double vmin = v_ref, vmax = v_ref, imin = 0.0, imax = 1.0;
    for (const auto& r : rows) {
        vmin = std::min(vmin, r.v_o);
        vmax = std::max(vmax, r.v_o);
        imin = std::min(imin, r.i_o);
        imax = std::max(imax, r.i_o);
    }
    const double vpad = std::max(0.5, 0.08 * (vmax - vmin));
    const double ipad = std::max(0.2, 0.08 * (imax - imin));

    Panel pv{60, 30, 860, 200, 0.0, tmax, vmin - vpad, vmax + vpad};
    Panel pi{60, 280, 860, 160, 0.0, tmax, imin - ipad, imax + ipad};

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"540\" "
        "viewBox=\"0 0 960 540\">\n<rect width=\"960\" height=\"540\" fill=\"white\"/>\n"
        "<text x=\"60\" y=\"16\" font-size=\"13\" fill=\"#000\">{} plant={} drm={}</text>\n",
        result.scenario.name,
        result.scenario.plant == Scenario::PlantKind::ideal ? "ideal" : "surrogate",
        result.scenario.drm_on ? "on" : "off");

    axis_box(svg, pv, "v_o [V]");
    axis_box(svg, pi, "i_o [A]");

    // reference line
    svg += fmt::format(
        "<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#c33\" "
        "stroke-dasharray=\"6 3\"/>\n",
        pv.x0, pv.py(v_ref), pv.x0 + pv.w, pv.py(v_ref));

    // load step markers
    for (const auto& e : result.scenario.load.schedule) {
        if (e.t_switch <= 0.0 || e.t_switch >= tmax) continue;
        for (const Panel& p : {pv, pi})
            svg += fmt::format(
                "<line x1=\"{:.1f}\" y1=\"{}\" x2=\"{:.1f}\" y2=\"{}\" stroke=\"#999\" "
                "stroke-dasharray=\"3 3\"/>\n",
                p.px(e.t_switch), p.y0, p.px(e.t_switch), p.y0 + p.h);
        svg += fmt::format(
            "<text x=\"{:.1f}\" y=\"{}\" font-size=\"10\" fill=\"#666\">{:.0f}W</text>\n",
            pv.px(e.t_switch) + 3, pv.y0 + 12, e.power_w);
    }

    polyline(svg, pv, rows, &StepRecord::v_o, "#1f77b4");
    polyline(svg, pi, rows, &StepRecord::i_o, "#2ca02c");

    // per-segment metric annotations
    double y = 470;
    for (const auto& m : result.segments) {
        svg += fmt::format(
            "<text x=\"60\" y=\"{}\" font-size=\"11\" fill=\"#000\">seg{} {:.0f}W: "
            "settle {} overshoot {:.2f}V ss_err {:.3f}V ripple {:.3f}V</text>\n",
            y, m.index, m.p_load_w,
            m.settled ? fmt::format("{:.2f}ms", m.settling_time_s * 1e3)
                      : std::string("unsettled"),
            m.overshoot_v, m.steady_state_error_v, m.ripple_pp_v);
        y += 16;
    }
    if (result.collapsed)
        svg += fmt::format(
            "<text x=\"60\" y=\"{}\" font-size=\"11\" fill=\"#c00\">voltage collapse at "
            "t={:.4f}s</text>\n",
            y, result.collapse_t);

    svg += "</svg>\n";
    return svg;
}

void write_scenario_svg(const std::string& path, const ScenarioResult& result,
                        double v_ref) {
    write_text_file(path, render_scenario_svg(result, v_ref));
}

}  // namespace buckrl
