/** Role-scoped views: which lane sees which event types in its feed.
 *
 * The full firehose stays available behind the "all events" toggle; the
 * scoped default is what makes the filtering benefit visible.
 */

export const ROLES = [
  "RepresentativeNationalAuthority",
  "PoliceRepresentative",
  "OfficeOfInfrastructureRepresentative",
  "OfficeOfInfrastructureFieldTeam",
] as const;

export type Role = (typeof ROLES)[number];

const FEED_SCOPES: Record<Role, string[]> = {
  RepresentativeNationalAuthority: [
    "AlertRSN", "AlertMF", "SuggestConfinement", "Report",
    "DecisionPointIssued", "DecisionChoice", "FieldAlert",
  ],
  PoliceRepresentative: [
    "AlertPoliceRepresentative", "ConfinementDecision", "ConfinementPlanValidated",
  ],
  OfficeOfInfrastructureRepresentative: [
    "AlertOfficeOfInfrastructure", "CirculationPlan", "AdaptationProposalEvent",
    "FieldAlert", "Report", "ActivityStatusChange", "InventoryUpdate", "DecisionChoice",
  ],
  OfficeOfInfrastructureFieldTeam: [
    "CirculationPlan", "ResourceRequest", "FieldAlert", "TaskAssignment",
    "ReportRequest", "ActivityStatusChange", "AdaptationProposalEvent",
  ],
};

/** A representative also steers the cards addressed to the teams they
 * oversee (the office console is one decision surface). */
const OVERSEES: Partial<Record<Role, string[]>> = {
  OfficeOfInfrastructureRepresentative: ["OfficeOfInfrastructureFieldTeam"],
};

export function feedEtypesFor(role: Role): string[] {
  return FEED_SCOPES[role];
}

/** Whether a card addressed to targetRole belongs on this role's console. */
export function actsFor(role: Role, targetRole: string): boolean {
  return targetRole === role || (OVERSEES[role] ?? []).includes(targetRole);
}
