export * from './types.js';
export * from './layouts.js';
export { SessionStore } from './store.js';
export type { SessionPhase } from './store.js';
export { ResumingStream, wsUrl } from './stream.js';
export type { SocketFactory, StreamSocket, StreamHandlers } from './stream.js';
export { GatewayClient, GatewayError } from './gateway.js';
export type { FetchLike } from './gateway.js';
export { renderFeed } from './render/feed.js';
export { renderChat } from './render/chat.js';
export { renderPopups } from './render/popup.js';
export { ResearcherConsole } from './console.js';
export type { AgentOption } from './console.js';
