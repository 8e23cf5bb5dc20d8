import * as echarts from "echarts";

import { Figure } from "./figures";

/** Render a figure to a standalone SVG string without a browser. */
export function renderSvg(figure: Figure): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width: figure.width,
    height: figure.height,
  });
  try {
    chart.setOption(figure.option);
    return chart.renderToSVGString();
  } finally {
    chart.dispose();
  }
}
