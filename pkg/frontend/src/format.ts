/** Display helpers: every timestamp on the console is t0-relative. */

export function t0(tsMs: number): string {
  const totalSeconds = Math.floor(tsMs / 1000);
  const minutes = Math.floor(totalSeconds / 60);
  const seconds = totalSeconds % 60;
  return `t0+${minutes}:${String(seconds).padStart(2, "0")}`;
}

export function num(value: number, digits = 2): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(digits);
}

/** Compact one-line summary of an event for the feed. */
export function eventSummary(etype: string, attrs: Record<string, unknown>): string {
  switch (etype) {
    case "AlertRSN":
      return `radiation ${num(Number(attrs.value))} mSv/h on ${attrs.sensor}`;
    case "AlertMF":
      return `wind changed by ${num(Number(attrs.speed_delta))} km/h at ${attrs.station}`;
    case "SuggestConfinement":
      return `${attrs.sensor_count} sensors above the ceiling: ${attrs.sensors}`;
    case "ConfinementDecision":
      return `confinement ordered within ${attrs.perimeter_km} km`;
    case "AlertPoliceRepresentative":
      return "confinement decision: define the confinement plan";
    case "AlertOfficeOfInfrastructure":
      return "confinement plan validated: prepare the circulation plan";
    case "CirculationPlan":
      return `${attrs.roads_closed} closures, ${attrs.deviations} deviations, ${attrs.zones} zones`;
    case "FieldAlert":
      return `lost ${attrs.quantity_lost} ${attrs.kind}(s), ${attrs.remaining} remaining`;
    case "ResourceRequest":
      return `${attrs.quantity} ${attrs.kind}(s) for ${attrs.holder}`;
    case "ActivityStatusChange":
      return `${attrs.activity} is ${attrs.status}`;
    case "InventoryUpdate":
      return `released ${attrs.released} ${attrs.kind}(s)`;
    case "Report":
      return attrs.kind === "periodic"
        ? `5-minute report: ${attrs.sensor_count} sensors, max ${num(Number(attrs.max_value))} mSv/h`
        : `${attrs.kind} report: ${attrs.text ?? ""}`;
    case "DecisionChoice":
      return `${attrs.chooser} chose ${attrs.option}`;
    case "DecisionPointIssued":
      return `${attrs.prompt}`;
    default:
      return JSON.stringify(attrs);
  }
}
