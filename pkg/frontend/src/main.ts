/** Console bootstrap: ?gateway=<url>&role=<Role> (both optional). */

import { GatewayClient } from "./api.js";
import { ROLES, type Role } from "./roles.js";
import { ConsoleSession } from "./session.js";
import { renderBadge, renderBoards, renderCards, renderChart, renderFeed, renderTopBar } from "./views.js";

function pick(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const gateway = params.get("gateway") ?? `${location.protocol}//${location.host}`;
  const role = (params.get("role") as Role) ?? "RepresentativeNationalAuthority";
  if (!ROLES.includes(role)) throw new Error(`unknown role ${role}`);

  const session = new ConsoleSession(new GatewayClient(gateway), role);
  const paint = () => {
    renderTopBar(pick("topbar"), session.state);
    renderFeed(pick("feed"), session.state);
    renderCards(pick("cards"), session.state, session);
    renderChart(pick("chart"), session.state);
    renderBoards(pick("boards"), session.state);
    renderBadge(pick("badge"), session.state);
    const toggle = document.getElementById("show-all") as HTMLInputElement | null;
    if (toggle) {
      toggle.onchange = () => {
        session.state.showAll = toggle.checked;
        rerender();
      };
    }
  };
  // One paint per frame no matter how many events a batch carries.
  let scheduled = false;
  const rerender = () => {
    if (scheduled) return;
    scheduled = true;
    requestAnimationFrame(() => {
      scheduled = false;
      paint();
    });
  };
  session.onChange(rerender);
  try {
    await session.connect();
  } catch {
    pick("feed").textContent = `cannot reach gateway at ${gateway}; retrying...`;
    setTimeout(() => void boot(), 2000);
    return;
  }
  rerender();
}

void boot();
