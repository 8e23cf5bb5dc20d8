export { TraceTable, parseTrace, traceColumns, column, requireColumns } from "./trace";
export { Disc, FunnelParams, ScenarioInfo, parseScenario, funnelWidth } from "./scenario";
export { Figure, trajectoriesFigure, rcbfFigure, inputsFigure } from "./figures";
export { renderSvg } from "./render";
